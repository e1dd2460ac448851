//! Single-round client/server protocol over ℓ servers.

pub mod client;
pub mod deploy;
pub mod server;
pub mod transport;
pub mod wire;

use thiserror::Error;

use crate::batch::BatchError;
use crate::dataset::DatasetError;
use crate::field::{Field, FieldElement, FieldVector};
use crate::indexgen::plan::PlanError;
use crate::indexgen::IndexError;
use crate::shamir::{lagrange_coefficients, reconstruct, ShamirError};

pub use client::{client_execute, decode_responses, dispatch, Dispatch, Outcome, Timings};
pub use deploy::{BucketConfig, DeployConfig, Deployment, FamilyConfig};
pub use server::{handle_bytes, server_handle, Metrics, MetricsSnapshot, ServerOptions, ServerState};
pub use transport::{Endpoint, Fault, Faulty, Loopback, TcpEndpoint, TcpServer, TransportError};
pub use wire::{Request, Response, Status, WireError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("need {need} responses, got {got}")]
    InsufficientResponses { need: usize, got: usize },
    #[error("responses are inconsistent; suspect coordinates: {suspects:?}")]
    Integrity { suspects: Vec<String> },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// No redundancy: exactly degree + 1 points (or fewer).
    Indeterminate,
    /// The points do not lie on one polynomial of the expected degree.
    /// `suspects` lists points whose removal restores consistency, when
    /// there is enough redundancy to tell.
    Inconsistent { suspects: Vec<FieldElement> },
}

fn consistent(field: &Field, points: &[(FieldElement, &[FieldElement])], degree: usize) -> bool {
    let (base, rest) = points.split_at(degree + 1);
    let xs: Vec<FieldElement> = base.iter().map(|p| p.0).collect();
    rest.iter().all(|(x, v)| {
        let Ok(lambda) = lagrange_coefficients(field, &xs, x) else {
            return false;
        };
        (0..v.len()).all(|w| {
            let mut acc = field.zero();
            for ((_, bv), l) in base.iter().zip(&lambda) {
                field.mul_add_assign(&mut acc, l, &bv[w]);
            }
            acc == v[w]
        })
    })
}

/// Checks that over-determined responses lie on one polynomial of `degree`,
/// and narrows an inconsistency down by leave-one-out when possible.
pub fn integrity_check(field: &Field, points: &[(FieldElement, &[FieldElement])], degree: usize) -> Verdict {
    if points.len() <= degree + 1 {
        return Verdict::Indeterminate;
    }
    if consistent(field, points, degree) {
        return Verdict::Ok;
    }
    let mut suspects = Vec::new();
    if points.len() >= degree + 3 {
        for i in 0..points.len() {
            let others: Vec<(FieldElement, &[FieldElement])> =
                points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
            if consistent(field, &others, degree) {
                suspects.push(points[i].0);
            }
        }
    }
    Verdict::Inconsistent { suspects }
}

/// Interpolates every batch position from exactly the given points.
pub fn decode_at(
    field: &Field,
    points: &[(FieldElement, &[FieldElement])],
    positions: &[u64],
    degree: usize,
) -> Result<Vec<FieldVector>, ProtocolError> {
    if points.len() < degree + 1 {
        return Err(ProtocolError::InsufficientResponses {
            need: degree + 1,
            got: points.len(),
        });
    }
    positions
        .iter()
        .map(|&pos| {
            let target = field.from_u64(pos).map_err(ShamirError::from)?;
            Ok(reconstruct(field, points, &target, degree)?)
        })
        .collect()
}
