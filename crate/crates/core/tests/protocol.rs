use std::sync::Arc;

use iaq::dataset::oracle::oracle_aggregate;
use iaq::dataset::sample;
use iaq::protocol::{client_execute, DeployConfig, Deployment, Endpoint, TcpEndpoint, TcpServer};
use iaq::query::{parse_batch, Answer};
use iaq::indexgen::plan::plan_batch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn one_round_over_tcp() {
    let cfg = DeployConfig::sample();
    let ds = sample::dataset(&cfg.field).unwrap();
    let d = Deployment::build(&ds, &cfg).unwrap();
    let servers: Vec<TcpServer> = d
        .servers
        .iter()
        .map(|s| TcpServer::spawn(Arc::clone(s), "127.0.0.1:0").unwrap())
        .collect();
    let endpoints: Vec<Box<dyn Endpoint>> = servers
        .iter()
        .map(|s| Box::new(TcpEndpoint::new(s.addr()).unwrap()) as Box<dyn Endpoint>)
        .collect();

    let specs = parse_batch("COUNT(*) WHERE gender = 'Female' AND admit < 2022-06-01; SUM(days) WHERE gender = 'Female'").unwrap();
    let plan = plan_batch(&specs, &d.catalog).unwrap();
    let share = d.share_config(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = client_execute(&d.field, &plan, &share, &endpoints, &mut rng).unwrap();
    let want: Vec<Answer> = specs.iter().map(|s| oracle_aggregate(&ds.table, s).unwrap()).collect();
    assert_eq!(out.answers, want);
    assert_eq!(out.answers[0], Answer::Value(0u32.into()));

    // a single request and a single response per server
    for s in &d.servers {
        let m = s.metrics().snapshot();
        assert_eq!((m.requests, m.responses), (1, 1));
    }
    for s in servers {
        s.shutdown();
    }
}
