//! Bivariate product kernels and their bandwidth-scaled evaluation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::BandwidthPair;
use crate::error::{Error, Result};

/// A symmetric bivariate density of product form `K(x, y) = k(x) k(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Epanechnikov,
    Gaussian,
    Uniform,
}

impl KernelKind {
    /// Univariate factor `k(u)`.
    #[inline]
    pub fn univariate(self, u: f64) -> f64 {
        match self {
            KernelKind::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelKind::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support of `k`, or `None` for unbounded support.
    pub fn support(self) -> Option<f64> {
        match self {
            KernelKind::Epanechnikov | KernelKind::Uniform => Some(1.0),
            KernelKind::Gaussian => None,
        }
    }

    /// `k(u / h) / h`.
    #[inline]
    pub fn scaled_univariate(self, d: f64, h: f64) -> f64 {
        self.univariate(d / h) / h
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epanechnikov-product" => Ok(KernelKind::Epanechnikov),
            "gaussian" | "gaussian-product" => Ok(KernelKind::Gaussian),
            "uniform" | "uniform-product" => Ok(KernelKind::Uniform),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Bivariate kernel density `K(x, y)`.
pub fn kernel_value(kind: KernelKind, x: f64, y: f64) -> f64 {
    kind.univariate(x) * kind.univariate(y)
}

/// `K(dt / h1, dr / h2) / (h1 h2)`.
pub fn scaled_kernel(kind: KernelKind, dt: f64, dr: f64, h: &BandwidthPair) -> Result<f64> {
    if !(h.h1 > 0.0 && h.h2 > 0.0 && h.h1.is_finite() && h.h2.is_finite()) {
        return Err(Error::InvalidBandwidth {
            h1: h.h1,
            h2: h.h2,
            reason: "bandwidths must be positive and finite".into(),
        });
    }
    Ok(kernel_value(kind, dt / h.h1, dr / h.h2) / (h.h1 * h.h2))
}
