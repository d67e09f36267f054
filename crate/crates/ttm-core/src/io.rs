//! File formats: fans, filtration data, and averaging setups, all JSON.
//!
//! Ring elements serialize as `{"b": "p/q", "c": "p/q", "v": int}`; subspace
//! bases as arrays of rows whose entries are rational (or Gaussian-rational)
//! strings or plain integers. A filtration file may reference its fan inline
//! or by path relative to the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::equivariance::{EquivariantSetup, Gauge, GaugeTerm};
use crate::fan::{Fan, FanError};
use crate::klyachko::{Filtration, KlyachkoData, KlyachkoError, Subspace};
use crate::rring::{RScalar, RVector};
use crate::scalar::{ExactField, ScalarParseError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Fan(#[from] FanError),
    #[error(transparent)]
    Klyachko(#[from] KlyachkoError),
    #[error(transparent)]
    Scalar(#[from] ScalarParseError),
    #[error("filtration file names no fan and none was supplied inline")]
    MissingFan,
}

impl Serialize for RScalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("RScalar", 3)?;
        s.serialize_field("b", &self.b.to_string())?;
        s.serialize_field("c", &self.c.to_string())?;
        match self.v.to_i64() {
            Some(v) => s.serialize_field("v", &v)?,
            None => s.serialize_field("v", &self.v.to_string())?,
        }
        s.end()
    }
}

#[derive(Deserialize)]
struct RScalarRepr {
    b: String,
    c: String,
    v: serde_json::Value,
}

impl<'de> Deserialize<'de> for RScalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RScalarRepr::deserialize(deserializer)?;
        let b = crate::scalar::parse_rational(&repr.b).map_err(D::Error::custom)?;
        let c = crate::scalar::parse_rational(&repr.c).map_err(D::Error::custom)?;
        let v = match &repr.v {
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(BigInt::from)
                .ok_or_else(|| D::Error::custom("non-integer winding"))?,
            serde_json::Value::String(s) => s
                .parse::<BigInt>()
                .map_err(|_| D::Error::custom("bad winding string"))?,
            _ => return Err(D::Error::custom("winding must be an integer or string")),
        };
        Ok(RScalar::new(b, c, v))
    }
}

impl Serialize for RVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(RVector::new(Vec::<RScalar>::deserialize(deserializer)?))
    }
}

/// On-disk fan: `{"n": …, "rays": [[RScalar…]…], "cones": [[int…]…]}`.
/// Cones list the generators of Σ; the subset closure and the empty cone are
/// implicit.
#[derive(Serialize, Deserialize)]
pub struct FanFile {
    pub n: usize,
    pub rays: Vec<RVector>,
    pub cones: Vec<Vec<usize>>,
}

impl FanFile {
    pub fn into_fan(self) -> Result<Fan, FanError> {
        Fan::new(self.n, self.rays, self.cones)
    }

    pub fn from_fan(fan: &Fan) -> Self {
        Self {
            n: fan.dim(),
            rays: fan.rays().to_vec(),
            cones: fan
                .inclusion_maximal_cones()
                .into_iter()
                .map(|c| c.into_iter().collect())
                .collect(),
        }
    }
}

pub fn load_fan(path: impl AsRef<Path>) -> Result<Fan, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: FanFile = serde_json::from_str(&text)?;
    Ok(file.into_fan()?)
}

fn field_entry<F: ExactField>(value: &serde_json::Value) -> Result<F, IoError> {
    match value {
        serde_json::Value::Number(n) => {
            let i = n
                .as_i64()
                .ok_or_else(|| ScalarParseError::Rational(n.to_string()))?;
            Ok(F::from_integer(i))
        }
        serde_json::Value::String(s) => Ok(F::parse(s)?),
        other => Err(ScalarParseError::Rational(other.to_string()).into()),
    }
}

#[derive(Serialize, Deserialize)]
struct JumpRepr {
    mu: RScalar,
    basis: Vec<Vec<serde_json::Value>>,
}

/// On-disk filtration data:
/// `{"fan": <path or object>, "rank": r, "filtrations": {"<ray>": [{"mu": …, "basis": …}…]}}`.
#[derive(Serialize, Deserialize)]
pub struct KlyachkoFile {
    pub fan: serde_json::Value,
    pub rank: usize,
    filtrations: BTreeMap<String, Vec<JumpRepr>>,
}

impl KlyachkoFile {
    pub fn into_data<F: ExactField>(self, base_dir: &Path) -> Result<KlyachkoData<F>, IoError> {
        let fan = match &self.fan {
            serde_json::Value::String(rel) => {
                let mut p = PathBuf::from(base_dir);
                p.push(rel);
                load_fan(p)?
            }
            serde_json::Value::Object(_) => {
                let file: FanFile = serde_json::from_value(self.fan.clone())?;
                file.into_fan()?
            }
            _ => return Err(IoError::MissingFan),
        };
        let mut filtrations = BTreeMap::new();
        for (ray_text, jumps) in &self.filtrations {
            let ray: usize = ray_text
                .parse()
                .map_err(|_| serde_json::Error::custom(format!("bad ray key {ray_text:?}")))?;
            let jumps = jumps
                .iter()
                .map(|j| {
                    let rows = j
                        .basis
                        .iter()
                        .map(|row| row.iter().map(field_entry::<F>).collect())
                        .collect::<Result<Vec<Vec<F>>, IoError>>()?;
                    Ok((j.mu.clone(), Subspace::from_rows(self.rank, rows)?))
                })
                .collect::<Result<Vec<_>, IoError>>()?;
            filtrations.insert(ray, Filtration::new(jumps));
        }
        Ok(KlyachkoData::new(fan, self.rank, filtrations)?)
    }
}

pub fn load_klyachko<F: ExactField>(path: impl AsRef<Path>) -> Result<KlyachkoData<F>, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: KlyachkoFile = serde_json::from_str(&text)?;
    file.into_data(path.parent().unwrap_or_else(|| Path::new(".")))
}

#[derive(Serialize, Deserialize)]
struct GaugeTermRepr {
    holo: Vec<u32>,
    anti: Vec<u32>,
    /// k×k matrix of `[re, im]` pairs.
    coeff: Vec<Vec<[f64; 2]>>,
}

/// On-disk averaging setup: ground-truth characters, gauge coefficients,
/// ball radius, node count, seed.
#[derive(Serialize, Deserialize)]
pub struct SetupFile {
    pub n: usize,
    pub k: usize,
    pub characters: Vec<RVector>,
    pub epsilon: f64,
    gauge: Vec<GaugeTermRepr>,
    pub quadrature_n: usize,
    pub seed: u64,
}

impl SetupFile {
    pub fn into_setup(self) -> EquivariantSetup {
        let terms = self
            .gauge
            .into_iter()
            .map(|t| GaugeTerm {
                holo: t.holo,
                anti: t.anti,
                coeff: DMatrix::from_fn(self.k, self.k, |i, j| {
                    let [re, im] = t.coeff[i][j];
                    Complex64::new(re, im)
                }),
            })
            .collect();
        EquivariantSetup {
            torus_dim: self.n,
            rank: self.k,
            characters: self.characters,
            ball_radius: self.epsilon,
            gauge: Gauge { terms },
            quadrature_nodes: self.quadrature_n,
            seed: self.seed,
        }
    }

    pub fn from_setup(setup: &EquivariantSetup) -> Self {
        Self {
            n: setup.torus_dim,
            k: setup.rank,
            characters: setup.characters.clone(),
            epsilon: setup.ball_radius,
            gauge: setup
                .gauge
                .terms
                .iter()
                .map(|t| GaugeTermRepr {
                    holo: t.holo.clone(),
                    anti: t.anti.clone(),
                    coeff: (0..setup.rank)
                        .map(|i| {
                            (0..setup.rank)
                                .map(|j| [t.coeff[(i, j)].re, t.coeff[(i, j)].im])
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
            quadrature_n: setup.quadrature_nodes,
            seed: setup.seed,
        }
    }
}

pub fn load_setup(path: impl AsRef<Path>) -> Result<EquivariantSetup, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: SetupFile = serde_json::from_str(&text)?;
    Ok(file.into_setup())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fan::test_fans::*;
    use crate::rring::ge_s;
    use num_rational::BigRational;

    #[test]
    fn rscalar_json_round_trip() {
        let x = RScalar::new(
            BigRational::new(3.into(), 4.into()),
            BigRational::new((-1).into(), 2.into()),
            7.into(),
        );
        let text = serde_json::to_string(&x).unwrap();
        assert!(text.contains("\"b\":\"3/4\""));
        assert!(text.contains("\"v\":7"));
        let back: RScalar = serde_json::from_str(&text).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn fan_file_round_trip() {
        let fan = twisted_cp2();
        let text = serde_json::to_string(&FanFile::from_fan(&fan)).unwrap();
        let back: FanFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_fan().unwrap(), fan);
    }

    #[test]
    fn klyachko_file_inline_fan() {
        let text = r#"{
            "fan": {"n": 1,
                    "rays": [[{"b":"1","c":"0","v":1}], [{"b":"-1","c":"0","v":-1}]],
                    "cones": [[1],[2]]},
            "rank": 2,
            "filtrations": {
                "1": [{"mu": {"b":"0","c":"0","v":0}, "basis": [[1,0],[0,1]]},
                      {"mu": {"b":"1","c":"0","v":1}, "basis": [["1","1/2"]]}],
                "2": [{"mu": {"b":"0","c":"0","v":0}, "basis": [[1,0],[0,1]]}]
            }
        }"#;
        let file: KlyachkoFile = serde_json::from_str(text).unwrap();
        let data = file.into_data::<BigRational>(Path::new(".")).unwrap();
        assert_eq!(data.rank, 2);
        assert_eq!(data.eval(1, &RScalar::one(), ge_s).dim(), 1);
        assert_eq!(data.eval(2, &RScalar::one(), ge_s).dim(), 0);
    }

    #[test]
    fn setup_file_round_trip() {
        let setup = crate::equivariance::random_setup(2, 2, 3, 16, 7);
        let text = serde_json::to_string(&SetupFile::from_setup(&setup)).unwrap();
        let back = serde_json::from_str::<SetupFile>(&text)
            .unwrap()
            .into_setup();
        assert_eq!(back.characters, setup.characters);
        assert_eq!(back.gauge, setup.gauge);
        assert_eq!(back.quadrature_nodes, setup.quadrature_nodes);
    }
}
