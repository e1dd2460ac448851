use std::time::{Duration, Instant};

use rand::RngCore;

use super::transport::Endpoint;
use super::wire::{self, Request, Status};
use super::{decode_at, integrity_check, ProtocolError, Verdict};
use crate::field::{Field, FieldElement, FieldVector};
use crate::indexgen::plan::Plan;
use crate::query::Answer;
use crate::shamir::{share_k_batch, ShareConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Timings {
    pub share: Duration,
    pub network: Duration,
    pub reconstruct: Duration,
}

/// Everything that came back from one round.
#[derive(Debug, Clone)]
pub struct Dispatch {
    /// Ok responses as `(x, payload)`, in server order.
    pub points: Vec<(FieldElement, FieldVector)>,
    /// `(server index, reason)` for every server that did not give a usable answer.
    pub failures: Vec<(usize, String)>,
    pub request_bytes: Vec<usize>,
    pub response_bytes: Vec<usize>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub answers: Vec<Answer>,
    /// One vector per plan slot.
    pub decoded: Vec<FieldVector>,
    /// Coordinates of the servers whose responses were interpolated.
    pub used: Vec<FieldElement>,
    pub verdict: Verdict,
    pub dispatch: Dispatch,
}

/// Shares the plan's basis vectors and sends every server its share concurrently, in one round.
pub fn dispatch<R: RngCore + ?Sized>(
    field: &Field,
    plan: &Plan,
    cfg: &ShareConfig,
    servers: &[Box<dyn Endpoint>],
    rng: &mut R,
) -> Result<Dispatch, ProtocolError> {
    if servers.len() != cfg.ell() {
        return Err(ProtocolError::Config(format!(
            "{} endpoints for {} evaluation points",
            servers.len(),
            cfg.ell()
        )));
    }
    let need = plan.degree(cfg.t()) + 1;
    if cfg.ell() < need {
        return Err(ProtocolError::InsufficientResponses {
            need,
            got: cfg.ell(),
        });
    }
    let t0 = Instant::now();
    let shares = share_k_batch(field, plan.p, &plan.constraints(), cfg, &plan.keyword, rng)?;
    let requests = shares
        .into_iter()
        .map(|sh| {
            wire::encode_request(
                field,
                &Request {
                    keyword: sh.hint,
                    k: sh.k,
                    x: sh.x,
                    q: sh.q,
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let share = t0.elapsed();

    let t1 = Instant::now();
    let replies: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = servers
            .iter()
            .zip(&requests)
            .map(|(ep, req)| scope.spawn(move || ep.call(req)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("endpoint thread panicked")).collect()
    });
    let network = t1.elapsed();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    let mut response_bytes = Vec::new();
    for (i, reply) in replies.into_iter().enumerate() {
        let expected_x = cfg.eval_points()[i];
        let bytes = match reply {
            Ok(b) => b,
            Err(e) => {
                failures.push((i, e.to_string()));
                continue;
            }
        };
        response_bytes.push(bytes.len());
        match wire::decode_response(field, &bytes) {
            Ok(r) if r.status != Status::Ok => failures.push((i, format!("{:?}", r.status))),
            Ok(r) if r.x != expected_x => failures.push((i, "wrong coordinate".into())),
            Ok(r) if r.payload.len() != plan.s => failures.push((i, "wrong payload length".into())),
            Ok(r) => points.push((r.x, r.payload)),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    Ok(Dispatch {
        points,
        failures,
        request_bytes: requests.iter().map(Vec::len).collect(),
        response_bytes,
        timings: Timings {
            share,
            network,
            reconstruct: Duration::ZERO,
        },
    })
}

/// Interpolates the plan's positions from exactly `points` (at least degree + 1 of them).
pub fn decode_responses(
    field: &Field,
    plan: &Plan,
    t: usize,
    points: &[(FieldElement, FieldVector)],
) -> Result<Vec<FieldVector>, ProtocolError> {
    let refs: Vec<(FieldElement, &[FieldElement])> = points.iter().map(|(x, v)| (*x, v.as_slice())).collect();
    decode_at(field, &refs, &plan.positions(), plan.degree(t))
}

/// Runs one query round: share, dispatch, check, interpolate, post-process.
///
/// The first degree + 1 ok responses are interpolated. Extra responses feed the
/// integrity check; an inconsistent set is reported as an error naming the suspects.
pub fn client_execute<R: RngCore + ?Sized>(
    field: &Field,
    plan: &Plan,
    cfg: &ShareConfig,
    servers: &[Box<dyn Endpoint>],
    rng: &mut R,
) -> Result<Outcome, ProtocolError> {
    let mut d = dispatch(field, plan, cfg, servers, rng)?;
    let degree = plan.degree(cfg.t());
    if d.points.len() < degree + 1 {
        return Err(ProtocolError::InsufficientResponses {
            need: degree + 1,
            got: d.points.len(),
        });
    }
    let t0 = Instant::now();
    let refs: Vec<(FieldElement, &[FieldElement])> = d.points.iter().map(|(x, v)| (*x, v.as_slice())).collect();
    let verdict = integrity_check(field, &refs, degree);
    if let Verdict::Inconsistent { suspects } = &verdict {
        return Err(ProtocolError::Integrity {
            suspects: suspects.iter().map(|x| field.to_biguint(x).to_string()).collect(),
        });
    }
    let used = &d.points[..degree + 1];
    let decoded = decode_responses(field, plan, cfg.t(), used)?;
    let answers = plan.finish(field, &decoded)?;
    d.timings.reconstruct = t0.elapsed();
    Ok(Outcome {
        answers,
        decoded,
        used: used.iter().map(|p| p.0).collect(),
        verdict,
        dispatch: d,
    })
}
