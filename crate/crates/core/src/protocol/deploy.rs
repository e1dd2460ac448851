//! Building a full deployment (indexes, buckets, servers) from a config file.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::client::{client_execute, Outcome};
use super::server::{ServerOptions, ServerState};
use super::transport::{Endpoint, Loopback};
use super::ProtocolError;
use crate::batch::{batch_indexes, BatchWarning};
use crate::dataset::filter::Predicate;
use crate::dataset::{project_essential, DatabaseMatrix, Dataset};
use crate::field::{Field, FieldElement, FieldSpec};
use crate::iaq::{format, BatchedCcs};
use crate::indexgen::plan::{plan_batch, BucketInfo, Catalog};
use crate::indexgen::{build_family, Direction, FamilyKind, IndexFamily};
use crate::query::QuerySpec;
use crate::shamir::{default_eval_points, ShareConfig};

pub const SAMPLE: &str = include_str!("../../fixtures/deploy.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub keyword: String,
    pub group: String,
    #[serde(default)]
    pub filters: Vec<String>,
    /// Set together with `direction` for a MIN/MAX index.
    #[serde(default)]
    pub order: Option<String>,
    #[serde(default)]
    pub direction: Option<Direction>,
}

impl FamilyConfig {
    pub fn kind(&self) -> Result<FamilyKind, ProtocolError> {
        let filters = self
            .filters
            .iter()
            .map(|f| {
                Predicate::parse(f)
                    .ok_or_else(|| ProtocolError::Config(format!("family {}: bad filter '{f}'", self.keyword)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        match (&self.order, self.direction) {
            (None, None) => Ok(FamilyKind::Group {
                group_attr: self.group.clone(),
                filters,
            }),
            (Some(order), Some(direction)) => Ok(FamilyKind::Extremum {
                group_attr: self.group.clone(),
                order_attr: order.clone(),
                direction,
                filters,
            }),
            _ => Err(ProtocolError::Config(format!(
                "family {}: order and direction go together",
                self.keyword
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketConfig {
    pub keyword: String,
    #[serde(rename = "family")]
    pub families: Vec<FamilyConfig>,
}

fn default_servers() -> usize {
    4
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployConfig {
    pub field: FieldSpec,
    #[serde(default = "default_servers")]
    pub servers: usize,
    /// Serve only the aggregation-set columns.
    #[serde(default)]
    pub essential: bool,
    #[serde(default = "yes")]
    pub skip_zero_cols: bool,
    #[serde(default)]
    pub parallel: bool,
    #[serde(rename = "bucket")]
    pub buckets: Vec<BucketConfig>,
}

impl DeployConfig {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        toml::from_str(text).map_err(|e| ProtocolError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn sample() -> Self {
        Self::parse(SAMPLE).expect("embedded deployment config")
    }

    pub fn options(&self) -> ServerOptions {
        ServerOptions {
            skip_zero_cols: self.skip_zero_cols,
            parallel: self.parallel,
        }
    }
}

/// What a remote client needs: the catalog and where the servers sit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientInfo {
    pub field: FieldSpec,
    pub reserved: u64,
    /// Server coordinates, decimal.
    pub coords: Vec<String>,
    pub catalog: Catalog,
}

impl ClientInfo {
    pub fn share_config(&self, t: usize) -> Result<ShareConfig, ProtocolError> {
        let field = Field::new(self.field.clone()).map_err(crate::shamir::ShamirError::from)?;
        let coords = self
            .coords
            .iter()
            .map(|c| {
                let v = c
                    .parse::<num_bigint::BigUint>()
                    .map_err(|_| ProtocolError::Config(format!("bad coordinate '{c}'")))?;
                field.from_biguint(&v).map_err(|e| ProtocolError::Config(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ShareConfig::new(&field, t, coords, self.reserved)?)
    }
}

/// Every server of one deployment, held in memory.
#[derive(Debug)]
pub struct Deployment {
    pub field: Field,
    pub catalog: Catalog,
    pub servers: Vec<Arc<ServerState>>,
    pub coords: Vec<FieldElement>,
    pub reserved: u64,
    pub families: Vec<IndexFamily>,
    pub warnings: Vec<(String, BatchWarning)>,
    /// `buckets[i][b]`: server i's copy of bucket b.
    buckets: Vec<Vec<BatchedCcs>>,
}

impl Deployment {
    pub fn build(ds: &Dataset, cfg: &DeployConfig) -> Result<Self, ProtocolError> {
        let field = ds.field().clone();
        if field.spec() != &cfg.field {
            return Err(ProtocolError::Config(format!(
                "dataset is over {}, config asks for {}",
                field.spec(),
                cfg.field
            )));
        }
        if cfg.servers == 0 {
            return Err(ProtocolError::Config("no servers".into()));
        }
        let mut families = Vec::new();
        let mut infos = Vec::new();
        for b in &cfg.buckets {
            if b.families.is_empty() {
                return Err(ProtocolError::Config(format!("bucket {} has no families", b.keyword)));
            }
            let built = b
                .families
                .iter()
                .map(|f| Ok(build_family(ds, &f.keyword, f.kind()?)?))
                .collect::<Result<Vec<_>, ProtocolError>>()?;
            infos.push(BucketInfo {
                keyword: b.keyword.clone(),
                p: built[0].index.p(),
                families: built.iter().map(|f| f.manifest.clone()).collect(),
            });
            families.push(built);
        }
        let db = if cfg.essential {
            project_essential(&ds.matrix)?
        } else {
            ds.matrix.clone()
        };
        let catalog = Catalog {
            schema: db.schema().clone(),
            buckets: infos,
        };
        let max_u = catalog.buckets.iter().map(BucketInfo::u).max().unwrap_or(1);
        let reserved = max_u.max(catalog.max_k()) as u64;
        let coords = default_eval_points(&field, cfg.servers, reserved).map_err(crate::shamir::ShamirError::from)?;

        let mut buckets: Vec<Vec<BatchedCcs>> = vec![Vec::new(); cfg.servers];
        let mut warnings = Vec::new();
        for (info, fams) in catalog.buckets.iter().zip(&families) {
            if fams.len() == 1 {
                for (i, x) in coords.iter().enumerate() {
                    buckets[i].push(BatchedCcs::from_simple(&field, &fams[0].index, *x, &fams[0].manifest.keyword));
                }
            } else {
                let indexes: Vec<_> = fams.iter().map(|f| f.index.clone()).collect();
                let labels: Vec<_> = fams.iter().map(|f| f.manifest.keyword.clone()).collect();
                let out = batch_indexes(&field, &indexes, &labels, &coords)?;
                warnings.extend(out.warnings.into_iter().map(|w| (info.keyword.clone(), w)));
                for (i, bucket) in out.buckets.into_iter().enumerate() {
                    buckets[i].push(bucket);
                }
            }
        }
        let servers = Self::states(&catalog, &coords, &buckets, &db, cfg.options())?;
        Ok(Deployment {
            field,
            catalog,
            servers,
            coords,
            reserved,
            families: families.into_iter().flatten().collect(),
            warnings,
            buckets,
        })
    }

    fn states(
        catalog: &Catalog,
        coords: &[FieldElement],
        buckets: &[Vec<BatchedCcs>],
        db: &DatabaseMatrix,
        options: ServerOptions,
    ) -> Result<Vec<Arc<ServerState>>, ProtocolError> {
        coords
            .iter()
            .zip(buckets)
            .map(|(x, mine)| {
                let named = catalog.buckets.iter().map(|b| b.keyword.clone()).zip(mine.iter().cloned()).collect();
                Ok(Arc::new(ServerState::new(*x, named, db.clone(), options)?))
            })
            .collect()
    }

    pub fn ell(&self) -> usize {
        self.servers.len()
    }

    pub fn share_config(&self, t: usize) -> Result<ShareConfig, ProtocolError> {
        Ok(ShareConfig::new(&self.field, t, self.coords.clone(), self.reserved)?)
    }

    pub fn client_info(&self) -> ClientInfo {
        ClientInfo {
            field: self.field.spec().clone(),
            reserved: self.reserved,
            coords: self.coords.iter().map(|x| self.field.to_biguint(x).to_string()).collect(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn loopback_endpoints(&self) -> Vec<Box<dyn Endpoint>> {
        self.servers
            .iter()
            .map(|s| Box::new(Loopback::new(s.clone())) as Box<dyn Endpoint>)
            .collect()
    }

    /// Plans and runs `specs` in one round against the in-process servers.
    pub fn run<R: RngCore + ?Sized>(&self, specs: &[QuerySpec], t: usize, rng: &mut R) -> Result<Outcome, ProtocolError> {
        let plan = plan_batch(specs, &self.catalog)?;
        client_execute(&self.field, &plan, &self.share_config(t)?, &self.loopback_endpoints(), rng)
    }

    /// Writes `server<i>/<bucket>.iaqb` for every server and `client.json`.
    pub fn write_buckets(&self, dir: &Path) -> Result<Vec<PathBuf>, ProtocolError> {
        let mut out = Vec::new();
        for (i, mine) in self.buckets.iter().enumerate() {
            let sdir = dir.join(format!("server{i}"));
            std::fs::create_dir_all(&sdir)?;
            for (info, bucket) in self.catalog.buckets.iter().zip(mine) {
                let path = sdir.join(format!("{}.iaqb", info.keyword));
                let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
                format::write_bucket(&mut w, &self.field, bucket).map_err(|e| ProtocolError::Config(e.to_string()))?;
                w.flush()?;
                out.push(path);
            }
        }
        let info = dir.join("client.json");
        let json = serde_json::to_string_pretty(&self.client_info()).map_err(|e| ProtocolError::Config(e.to_string()))?;
        std::fs::write(&info, json)?;
        out.push(info);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample;
    use crate::query::{parse_batch, parse_query, Answer};
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deployment() -> Deployment {
        let cfg = DeployConfig::sample();
        let ds = sample::dataset(&cfg.field).unwrap();
        Deployment::build(&ds, &cfg).unwrap()
    }

    #[test]
    fn sample_config_parses() {
        let cfg = DeployConfig::sample();
        assert_eq!(cfg.servers, 4);
        assert!(cfg.skip_zero_cols && !cfg.essential);
        assert_eq!(cfg.buckets.len(), 4);
        assert!(cfg.buckets[3].families[0].kind().unwrap().describe().starts_with("max(admit)"));
        let bad = FamilyConfig {
            keyword: "x".into(),
            group: "state".into(),
            filters: vec![],
            order: Some("admit".into()),
            direction: None,
        };
        assert!(bad.kind().is_err());
    }

    #[test]
    fn end_to_end_sample() {
        let d = deployment();
        assert_eq!(d.reserved, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = parse_query("SELECT SUM(days) FROM hospital WHERE patient = 3").unwrap();
        let out = d.run(&[q], 1, &mut rng).unwrap();
        assert_eq!(out.answers, vec![Answer::Value(BigUint::from(21u32))]);

        let batch = parse_batch("SELECT COUNT(*) WHERE gender = 'Female' AND admit < 2022-06-01; SELECT COUNT(*) WHERE gender = 'Female'").unwrap();
        let out = d.run(&batch, 1, &mut rng).unwrap();
        assert_eq!(
            out.answers,
            vec![Answer::Value(BigUint::from(0u32)), Answer::Value(BigUint::from(2u32))]
        );
    }

    #[test]
    fn essential_projection_answers_the_same() {
        let mut cfg = DeployConfig::sample();
        cfg.essential = true;
        let ds = sample::dataset(&cfg.field).unwrap();
        let d = Deployment::build(&ds, &cfg).unwrap();
        assert!(d.catalog.s() < ds.matrix.s());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = d.run(&[parse_query("SELECT MEAN(days) WHERE state = 'CA'").unwrap()], 1, &mut rng).unwrap();
        assert_eq!(out.answers[0].to_string(), Answer::Mean { sum: 4u32.into(), count: 2u32.into() }.to_string());
    }

    #[test]
    fn field_mismatch_rejected() {
        let cfg = DeployConfig::sample();
        let ds = sample::dataset(&FieldSpec::preset_prime(128).unwrap()).unwrap();
        assert!(matches!(Deployment::build(&ds, &cfg), Err(ProtocolError::Config(_))));
    }
}
