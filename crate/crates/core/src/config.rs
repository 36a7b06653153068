//! System specifications: JSON parsing, input digests and the built-in
//! example systems.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ifs_model::{
    ContractionMap, IfsSystem, Interval, MapGenerator, Orientation, TailDescriptor,
};
use crate::potentials::{BaseFunction, Potential, PotentialFamily};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSpec {
    domain: [f64; 2],
    #[serde(default)]
    kind: MapKind,
    #[serde(default)]
    maps: Vec<MapSpec>,
    infinite: Option<InfiniteSpec>,
    #[serde(rename = "K")]
    distortion: Option<f64>,
    s: Option<f64>,
    #[serde(rename = "D")]
    eventual_factor: Option<f64>,
    grid: Option<usize>,
    potential: PotentialSpec,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum MapKind {
    #[default]
    Similarity,
    Gauss,
    Custom,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MapSpec {
    Similarity {
        ratio: f64,
        offset: f64,
        #[serde(default)]
        orientation: Option<OrientationSpec>,
    },
    Gauss {
        k: u32,
    },
    Mobius {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OrientationSpec {
    Sign(f64),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InfiniteSpec {
    family: InfiniteFamily,
    ratio: Option<f64>,
    tail: Option<TailSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InfiniteFamily {
    Geometric,
    Gauss,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailSpec {
    c: f64,
    p: Option<f64>,
    ratio: Option<f64>,
    from: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PotentialSpec {
    Logweights {
        weights: WeightsSpec,
    },
    Derivative {
        s: f64,
        #[serde(default)]
        g: Option<BaseSpec>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WeightsSpec {
    List(Vec<f64>),
    Generator { family: String, ratio: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BaseSpec {
    Constant(f64),
    Name(String),
}

/// A parsed system file together with the SHA-256 of its bytes.
#[derive(Clone, Debug)]
pub struct LoadedSystem {
    pub system: IfsSystem,
    pub family: PotentialFamily,
    pub digest: String,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_system(path: &Path) -> Result<LoadedSystem> {
    let bytes = std::fs::read(path)?;
    parse_system(&bytes)
}

pub fn parse_system(bytes: &[u8]) -> Result<LoadedSystem> {
    let spec: SystemSpec = serde_json::from_slice(bytes)?;
    let (system, family) = build(spec)?;
    Ok(LoadedSystem {
        system,
        family,
        digest: digest(bytes),
    })
}

fn orientation(spec: &Option<OrientationSpec>) -> Result<Orientation> {
    match spec {
        None => Ok(Orientation::Preserving),
        Some(OrientationSpec::Sign(s)) => Orientation::from_sign(*s),
        Some(OrientationSpec::Name(n)) => match n.as_str() {
            "preserving" | "+" | "+1" => Ok(Orientation::Preserving),
            "reversing" | "-" | "-1" => Ok(Orientation::Reversing),
            other => Err(Error::InvalidSystem(format!(
                "unknown orientation {other:?}"
            ))),
        },
    }
}

fn build_map(kind: &MapKind, spec: &MapSpec, domain: Interval) -> Result<ContractionMap> {
    match (kind, spec) {
        (
            MapKind::Similarity,
            MapSpec::Similarity {
                ratio,
                offset,
                orientation: o,
            },
        ) => ContractionMap::similarity(*ratio, *offset, orientation(o)?),
        (MapKind::Gauss, MapSpec::Gauss { k }) => {
            if *k == 0 {
                return Err(Error::InvalidSystem(
                    "Gauss branch index must be at least 1".into(),
                ));
            }
            Ok(ContractionMap::gauss_branch(*k))
        }
        (MapKind::Custom, MapSpec::Mobius { a, b, c, d }) => {
            ContractionMap::mobius(*a, *b, *c, *d, domain)
        }
        (kind, spec) => Err(Error::InvalidSystem(format!(
            "map {spec:?} does not match system kind {kind:?}"
        ))),
    }
}

fn build(spec: SystemSpec) -> Result<(IfsSystem, PotentialFamily)> {
    let domain = Interval::new(spec.domain[0], spec.domain[1])?;
    let mut system = match (&spec.infinite, spec.maps.is_empty()) {
        (Some(_), false) => {
            return Err(Error::InvalidSystem(
                "give either maps or infinite, not both".into(),
            ))
        }
        (None, true) => return Err(Error::InvalidSystem("system has no maps".into())),
        (None, false) => {
            let maps = spec
                .maps
                .iter()
                .map(|m| build_map(&spec.kind, m, domain))
                .collect::<Result<Vec<_>>>()?;
            IfsSystem::finite(domain, maps)?
        }
        (Some(inf), true) => {
            let generator = match inf.family {
                InfiniteFamily::Geometric => MapGenerator::Geometric {
                    ratio: inf.ratio.ok_or_else(|| {
                        Error::InvalidSystem("geometric infinite family needs a ratio".into())
                    })?,
                },
                InfiniteFamily::Gauss => MapGenerator::Gauss,
            };
            let tail = inf.tail.as_ref().map(|t| tail_descriptor(t)).transpose()?;
            IfsSystem::infinite(domain, generator, tail)?
        }
    };
    if let Some(d) = spec.eventual_factor {
        system = system.with_eventual_factor(d)?;
    }
    if let Some(s) = spec.s {
        system = system.with_contraction(s)?;
    }
    if let Some(k) = spec.distortion {
        system = system.with_distortion(k)?;
    }
    if let Some(g) = spec.grid {
        system = system.with_grid(g)?;
    }

    let family = match spec.potential {
        PotentialSpec::Logweights {
            weights: WeightsSpec::List(w),
        } => PotentialFamily::log_weights(w)?,
        PotentialSpec::Logweights {
            weights: WeightsSpec::Generator { family, ratio },
        } => {
            if family != "geometric" {
                return Err(Error::InvalidPotential(format!(
                    "unknown weight family {family:?}"
                )));
            }
            PotentialFamily::geometric_weights(ratio)?
        }
        PotentialSpec::Derivative { s, g } => {
            let base = match g {
                None => BaseFunction::Constant(0.0),
                Some(BaseSpec::Constant(c)) => BaseFunction::Constant(c),
                Some(BaseSpec::Name(n)) if n == "zero" => BaseFunction::Constant(0.0),
                Some(BaseSpec::Name(n)) => {
                    return Err(Error::InvalidPotential(format!(
                        "unknown base function {n:?}"
                    )))
                }
            };
            PotentialFamily::new(Potential::Derivative { exponent: s, base })?
        }
    };
    family.check_compatible(&system)?;
    Ok((system, family))
}

fn tail_descriptor(t: &TailSpec) -> Result<TailDescriptor> {
    let from = t.from.unwrap_or(1);
    match (t.p, t.ratio) {
        (Some(p), None) => Ok(TailDescriptor::PowerLaw { c: t.c, p, from }),
        (None, Some(ratio)) => Ok(TailDescriptor::Geometric {
            c: t.c,
            ratio,
            from,
        }),
        _ => Err(Error::InvalidSystem(
            "tail needs exactly one of p or ratio".into(),
        )),
    }
}

/// Built-in systems used by the tests and documentation.
pub mod presets {
    use super::*;

    fn thirds() -> Vec<ContractionMap> {
        vec![
            ContractionMap::similarity(1.0 / 3.0, 0.0, Orientation::Preserving).unwrap(),
            ContractionMap::similarity(1.0 / 3.0, 2.0 / 3.0, Orientation::Preserving).unwrap(),
        ]
    }

    /// Middle-thirds Cantor set with equal weights.
    pub fn cantor() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::finite(Interval::unit(), thirds()).unwrap();
        (sys, PotentialFamily::log_weights(vec![0.5, 0.5]).unwrap())
    }

    /// Middle-thirds Cantor set with weights `(0.7, 0.3)`.
    pub fn biased_cantor() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::finite(Interval::unit(), thirds()).unwrap();
        (sys, PotentialFamily::log_weights(vec![0.7, 0.3]).unwrap())
    }

    /// `s_i = 3^{-i}`, `p_i = 2^{-i}`.
    pub fn geometric() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::infinite(
            Interval::unit(),
            MapGenerator::Geometric { ratio: 1.0 / 3.0 },
            None,
        )
        .unwrap();
        (sys, PotentialFamily::geometric_weights(0.5).unwrap())
    }

    /// Continued-fraction branches `1/(1+x)`, `1/(2+x)` with `f = log|φ′|`.
    pub fn gauss_pair() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::finite(
            Interval::unit(),
            vec![
                ContractionMap::gauss_branch(1),
                ContractionMap::gauss_branch(2),
            ],
        )
        .unwrap();
        (sys, PotentialFamily::derivative(1.0).unwrap())
    }

    /// All continued-fraction branches with `f = log|φ′|`.
    pub fn gauss() -> (IfsSystem, PotentialFamily) {
        let sys = IfsSystem::infinite(Interval::unit(), MapGenerator::Gauss, None).unwrap();
        (sys, PotentialFamily::derivative(1.0).unwrap())
    }
}
