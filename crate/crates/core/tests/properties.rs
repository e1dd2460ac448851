use iaq::batch::{batch_indexes, recover_index};
use iaq::bench::random_index;
use iaq::dataset::DatabaseMatrix;
use iaq::field::{Field, FieldElement, FieldSpec};
use iaq::iaq::{BatchedCcs, SimpleIaq};
use iaq::protocol::wire::{self, Request, Response, Status};
use iaq::protocol::{integrity_check, server_handle, ServerOptions, ServerState, Verdict};
use iaq::query::parse_query;
use iaq::shamir::{reconstruct, share_k_batch, ShareConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fields() -> impl Strategy<Value = Field> {
    prop_oneof![
        Just(FieldSpec::mersenne31()),
        Just(FieldSpec::binary8()),
        Just(FieldSpec::binary16()),
        Just(FieldSpec::prime_u64(97).unwrap()),
        Just(FieldSpec::preset_prime(128).unwrap()),
    ]
    .prop_map(|s| Field::new(s).unwrap())
}

fn element(f: &Field, seed: u64) -> FieldElement {
    f.random(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_axioms(f in fields(), sa: u64, sb: u64, sc: u64) {
        let (a, b, c) = (element(&f, sa), element(&f, sb), element(&f, sc));
        prop_assert_eq!(f.add(&a, &b), f.add(&b, &a));
        prop_assert_eq!(f.mul(&a, &b), f.mul(&b, &a));
        prop_assert_eq!(f.mul(&a, &f.add(&b, &c)), f.add(&f.mul(&a, &b), &f.mul(&a, &c)));
        prop_assert_eq!(f.mul(&f.mul(&a, &b), &c), f.mul(&a, &f.mul(&b, &c)));
        prop_assert_eq!(f.sub(&f.add(&a, &b), &b), a);
        prop_assert_eq!(f.add(&a, &f.neg(&a)), f.zero());
        if !a.is_zero() {
            prop_assert_eq!(f.mul(&a, &f.inv(&a).unwrap()), f.one());
        }
        prop_assert_eq!(f.deserialize(&f.serialize(&a)).unwrap(), a);
        prop_assert_eq!(f.serialize(&a).len(), f.byte_width());
    }

    #[test]
    fn shares_reconstruct_from_any_subset(
        f in fields(), t in 0usize..3, extra in 0usize..3, p in 1usize..12, pick: u64, seed: u64,
    ) {
        let ell = t + 1 + extra;
        let cfg = ShareConfig::with_default_points(&f, t, ell, 1).unwrap();
        let index = (pick % p as u64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shares = share_k_batch(&f, p, &[(0, index)], &cfg, "k", &mut rng).unwrap();
        let mut order: Vec<usize> = (0..ell).collect();
        order.rotate_left((seed % ell as u64) as usize);
        let pts: Vec<(FieldElement, &[FieldElement])> =
            order[..t + 1].iter().map(|&i| (shares[i].x, shares[i].q.as_slice())).collect();
        let e = reconstruct(&f, &pts, &f.zero(), t).unwrap();
        for (c, v) in e.iter().enumerate() {
            prop_assert_eq!(v, &if c == index { f.one() } else { f.zero() });
        }
    }

    #[test]
    fn batched_buckets_recover_every_position(u in 1usize..5, p in 1usize..6, r in 2usize..12, seed: u64) {
        let f = Field::new(FieldSpec::mersenne31()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family: Vec<SimpleIaq> = (0..u).map(|_| random_index(p, r, 2, &mut rng).unwrap()).collect();
        let labels: Vec<String> = (0..u).map(|j| format!("f{j}")).collect();
        let coords: Vec<FieldElement> = (0..u as u64 + 1).map(|i| f.from_u64(u as u64 + i).unwrap()).collect();
        let out = batch_indexes(&f, &family, &labels, &coords).unwrap();
        let refs: Vec<&BatchedCcs> = out.buckets.iter().collect();
        for (j, m) in family.iter().enumerate() {
            let got = recover_index(&f, &refs, j).unwrap();
            prop_assert_eq!(got.ccs(), m.ccs());
        }
    }

    #[test]
    fn wire_round_trip(f in fields(), kw in "[a-z_]{0,12}", k in 1u16..5, p in 0usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let req = Request {
            keyword: kw.clone(),
            k,
            x: f.random(&mut rng),
            q: (0..p).map(|_| f.random(&mut rng)).collect(),
        };
        let bytes = wire::encode_request(&f, &req).unwrap();
        prop_assert_eq!(bytes.len(), wire::request_header_len(&f, &kw) + p * f.byte_width());
        prop_assert_eq!(wire::decode_request(&f, &bytes).unwrap(), req);

        let resp = Response { status: Status::Ok, x: f.random(&mut rng), payload: (0..p).map(|_| f.random(&mut rng)).collect() };
        let bytes = wire::encode_response(&f, &resp);
        prop_assert_eq!(bytes.len(), wire::response_header_len(&f) + p * f.byte_width());
        prop_assert_eq!(wire::decode_response(&f, &bytes).unwrap(), resp);
    }

    #[test]
    fn query_display_parses_back(
        func in prop_oneof![Just("SUM(days)"), Just("COUNT(*)"), Just("MEAN(n)"), Just("MAX(admit)"), Just("MIN(admit)")],
        attr in "[a-z]{1,6}",
        level in "[A-Za-z]{1,6}",
        num in 0u32..1000,
        with_num: bool,
    ) {
        let mut text = format!("{func} WHERE {attr} = '{level}'");
        if with_num {
            text.push_str(&format!(" AND n < {num}"));
        }
        let q = parse_query(&text).unwrap();
        prop_assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn tampering_is_detected_and_located(t in 0usize..3, spare in 1usize..3, victim: usize, seed: u64) {
        let f = Field::new(FieldSpec::mersenne31()).unwrap();
        let ell = t + 1 + spare;
        let cfg = ShareConfig::with_default_points(&f, t, ell, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shares = share_k_batch(&f, 4, &[(0, 1)], &cfg, "k", &mut rng).unwrap();
        let v = victim % ell;
        shares[v].q[2] = f.add(&shares[v].q[2], &f.one());
        let pts: Vec<(FieldElement, &[FieldElement])> = shares.iter().map(|s| (s.x, s.q.as_slice())).collect();
        let verdict = integrity_check(&f, &pts, t);
        if spare >= 2 {
            prop_assert_eq!(verdict, Verdict::Inconsistent { suspects: vec![shares[v].x] });
        } else {
            let inconsistent = matches!(verdict, Verdict::Inconsistent { .. });
            prop_assert!(inconsistent);
        }
    }

    #[test]
    fn zero_column_skipping_does_not_change_answers(p in 1usize..8, r in 6usize..40, agg in 1usize..6, s in 1usize..4, seed: u64) {
        let f = Field::new(FieldSpec::mersenne31()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index = random_index(p, r, agg, &mut rng).unwrap();
        let db = DatabaseMatrix::random(&f, r, s, &mut rng);
        let x = f.from_u64(3).unwrap();
        let bucket = BatchedCcs::from_simple(&f, &index, x, "k");
        let server = |skip| {
            let opts = ServerOptions { skip_zero_cols: skip, ..ServerOptions::default() };
            ServerState::new(x, vec![("k".into(), bucket.clone())], db.clone(), opts).unwrap()
        };
        let req = Request { keyword: "k".into(), k: 1, x, q: (0..p).map(|_| f.random(&mut rng)).collect() };
        let (on, off) = (server_handle(&server(true), &req), server_handle(&server(false), &req));
        prop_assert_eq!(on.status, Status::Ok);
        prop_assert_eq!(&on.payload, &off.payload);
        // and both equal (q^T M) D computed densely
        let mut want = vec![f.zero(); s];
        for (row, qi) in req.q.iter().enumerate() {
            let dense = index.row(row).to_dense(&f);
            for (c, m) in dense.iter().enumerate() {
                let coeff = f.mul(qi, m);
                for (w, acc) in want.iter_mut().enumerate() {
                    f.mul_add_assign(acc, &coeff, db.get(c, w));
                }
            }
        }
        prop_assert_eq!(on.payload, want);
    }
}
