use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::wire::{self, Request, Response, Status, WireError};
use super::ProtocolError;
use crate::dataset::{db_multiply, db_multiply_sparse, DatabaseMatrix};
use crate::field::{Field, FieldElement};
use crate::iaq::{vspm, vspm_columns, vspm_par, BatchedCcs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerOptions {
    /// Only visit index columns holding a nonzero, and multiply only those records.
    pub skip_zero_cols: bool,
    /// Data-parallel VspM.
    pub parallel: bool,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            skip_zero_cols: true,
            parallel: false,
        }
    }
}

#[derive(Debug, Default)]
pub struct Metrics {
    pub requests: AtomicU64,
    pub responses: AtomicU64,
    pub vspm_nanos: AtomicU64,
    pub dbmul_nanos: AtomicU64,
}

impl Metrics {
    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            requests: self.requests.load(Ordering::Relaxed),
            responses: self.responses.load(Ordering::Relaxed),
            vspm_nanos: self.vspm_nanos.load(Ordering::Relaxed),
            dbmul_nanos: self.dbmul_nanos.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricsSnapshot {
    pub requests: u64,
    pub responses: u64,
    pub vspm_nanos: u64,
    pub dbmul_nanos: u64,
}

#[derive(Debug)]
struct Bucket {
    index: BatchedCcs,
    nonzero_cols: Vec<usize>,
}

/// One server: its coordinate, its buckets, and its copy of the database.
/// Read-only once built; metrics are the only shared mutable state.
#[derive(Debug)]
pub struct ServerState {
    field: Field,
    coord: FieldElement,
    buckets: HashMap<String, Bucket>,
    db: DatabaseMatrix,
    options: ServerOptions,
    metrics: Metrics,
}

impl ServerState {
    pub fn new(
        coord: FieldElement,
        buckets: Vec<(String, BatchedCcs)>,
        db: DatabaseMatrix,
        options: ServerOptions,
    ) -> Result<Self, ProtocolError> {
        let field = db.field().clone();
        let mut map = HashMap::new();
        for (keyword, index) in buckets {
            if index.r() != db.r() {
                return Err(ProtocolError::Config(format!(
                    "bucket {keyword} has {} columns for {} records",
                    index.r(),
                    db.r()
                )));
            }
            if index.x() != &coord {
                return Err(ProtocolError::Config(format!(
                    "bucket {keyword} was evaluated at another coordinate"
                )));
            }
            let nonzero_cols = index.ccs().nonzero_columns();
            if map.insert(keyword.clone(), Bucket { index, nonzero_cols }).is_some() {
                return Err(ProtocolError::Config(format!("duplicate bucket keyword {keyword}")));
            }
        }
        Ok(ServerState {
            field,
            coord,
            buckets: map,
            db,
            options,
            metrics: Metrics::default(),
        })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn coord(&self) -> &FieldElement {
        &self.coord
    }

    pub fn db(&self) -> &DatabaseMatrix {
        &self.db
    }

    pub fn options(&self) -> ServerOptions {
        self.options
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.buckets.keys().map(String::as_str)
    }

    pub fn bucket(&self, keyword: &str) -> Option<&BatchedCcs> {
        self.buckets.get(keyword).map(|b| &b.index)
    }
}

fn reject(state: &ServerState, status: Status) -> Response {
    Response {
        status,
        x: state.coord,
        payload: Vec::new(),
    }
}

/// `(q · bucket[hint]) · D`.
pub fn server_handle(state: &ServerState, req: &Request) -> Response {
    let Some(bucket) = state.buckets.get(&req.keyword) else {
        return reject(state, Status::UnknownKeyword);
    };
    if req.q.len() != bucket.index.p() || req.x != state.coord || req.k == 0 {
        return reject(state, Status::DimensionError);
    }
    let field = &state.field;
    let t0 = Instant::now();
    let payload = if state.options.skip_zero_cols {
        let Ok(support) = vspm_columns(field, &req.q, &bucket.index, &bucket.nonzero_cols, state.options.parallel)
        else {
            return reject(state, Status::DimensionError);
        };
        let t1 = Instant::now();
        let out = db_multiply_sparse(&support, &state.db);
        record(state, t0, t1);
        out
    } else {
        let product = if state.options.parallel {
            vspm_par(field, &req.q, &bucket.index)
        } else {
            vspm(field, &req.q, &bucket.index)
        };
        let Ok(product) = product else {
            return reject(state, Status::DimensionError);
        };
        let t1 = Instant::now();
        let out = db_multiply(&product, &state.db);
        record(state, t0, t1);
        out
    };
    match payload {
        Ok(payload) => Response {
            status: Status::Ok,
            x: state.coord,
            payload,
        },
        Err(_) => reject(state, Status::DimensionError),
    }
}

fn record(state: &ServerState, t0: Instant, t1: Instant) {
    let m = &state.metrics;
    m.vspm_nanos.fetch_add((t1 - t0).as_nanos() as u64, Ordering::Relaxed);
    m.dbmul_nanos.fetch_add(t1.elapsed().as_nanos() as u64, Ordering::Relaxed);
}

/// Decodes, answers, and encodes one request; counts both messages.
pub fn handle_bytes(state: &ServerState, bytes: &[u8]) -> Result<Vec<u8>, WireError> {
    state.metrics.requests.fetch_add(1, Ordering::Relaxed);
    let req = wire::decode_request(&state.field, bytes)?;
    let resp = server_handle(state, &req);
    state.metrics.responses.fetch_add(1, Ordering::Relaxed);
    Ok(wire::encode_response(&state.field, &resp))
}
