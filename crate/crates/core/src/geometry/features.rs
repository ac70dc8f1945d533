//! SCH ear features from a remeshed ear patch.

use std::fmt;
use std::str::FromStr;

use super::patch::{uniform_cap_grid, EarPatch};
use crate::cap::{cap_basis, cap_fit_options, feature_fit_options, CapBasis, CapFitter, CapSpec, DegreeTable, SchCoefficients};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sphere::DirectionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    /// Archive/feature ordering: left = 0, right = 1.
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    /// One-hot ear indicator used as a network input.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Side::Left => [1.0, 0.0],
            Side::Right => [0.0, 1.0],
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "L" | "l" => Ok(Side::Left),
            "right" | "R" | "r" => Ok(Side::Right),
            other => Err(Error::Invalid(format!("unknown ear side '{other}'"))),
        }
    }
}

/// SCH coefficients of the x, y and z coordinate functions of one ear.
#[derive(Debug, Clone, PartialEq)]
pub struct EarFeatures {
    /// `(K+1)² × 3`, columns x, y, z.
    pub sch_xyz: Matrix<f64>,
    pub side: Side,
}

impl EarFeatures {
    pub fn coefficients(&self, column: usize) -> Vec<f64> {
        self.sch_xyz.column(column)
    }
}

/// Shared cap basis and factorization over a fixed uniform grid.
#[derive(Debug, Clone)]
pub struct EarFeatureExtractor {
    table: DegreeTable,
    grid: DirectionSet,
    basis: CapBasis<f64>,
    fitter: CapFitter<f64>,
}

impl EarFeatureExtractor {
    pub fn new(spec: CapSpec, grid_points: usize) -> Result<Self> {
        Self::with_table(DegreeTable::solve(&spec)?, grid_points)
    }

    pub fn with_table(table: DegreeTable, grid_points: usize) -> Result<Self> {
        let spec = CapSpec::new(table.half_angle(), table.max_index())?;
        let grid = uniform_cap_grid(spec.half_angle(), grid_points);
        let basis = cap_basis::<f64>(&spec, &table, &grid)?;
        let fitter = basis.fitter(feature_fit_options())?;
        Ok(Self {
            table,
            grid,
            basis,
            fitter,
        })
    }

    pub fn spec(&self) -> &CapSpec {
        self.basis.spec()
    }

    pub fn grid(&self) -> &DirectionSet {
        &self.grid
    }

    pub fn basis(&self) -> &CapBasis<f64> {
        &self.basis
    }

    pub fn table(&self) -> &DegreeTable {
        &self.table
    }

    /// Three independent cap fits, one per coordinate column.
    pub fn extract(&self, patch: &EarPatch, side: Side) -> Result<EarFeatures> {
        if patch.grid.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                got: patch.grid.len(),
            });
        }
        let n = self.spec().coefficient_count();
        let mut sch = Matrix::zeros(n, 3);
        for c in 0..3 {
            let q = self.fitter.fit(&patch.column(c))?;
            for (i, &v) in q.values().iter().enumerate() {
                sch.set(i, c, v);
            }
        }
        Ok(EarFeatures { sch_xyz: sch, side })
    }

    /// Per-sample reconstruction distance (meters) between the patch and
    /// its SCH expansion.
    pub fn reconstruction_distances(&self, patch: &EarPatch, features: &EarFeatures) -> Result<Vec<f64>> {
        let mut recon = Vec::with_capacity(3);
        for c in 0..3 {
            let q = SchCoefficients::new(*self.spec(), features.coefficients(c))?;
            recon.push(self.basis.reconstruct(&q)?);
        }
        Ok(patch
            .samples_xyz
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (0..3)
                    .map(|c| (p[c] - recon[c][i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

/// Convenience wrapper building a fresh extractor on the patch's own grid.
pub fn ear_sch_features(patch: &EarPatch, table: &DegreeTable, side: Side) -> Result<EarFeatures> {
    let basis = cap_basis::<f64>(&patch.cap, table, &patch.grid)?;
    let fitter = basis.fitter(cap_fit_options())?;
    let n = patch.cap.coefficient_count();
    let mut sch = Matrix::zeros(n, 3);
    for c in 0..3 {
        let q = fitter.fit(&patch.column(c))?;
        for (i, &v) in q.values().iter().enumerate() {
            sch.set(i, c, v);
        }
    }
    Ok(EarFeatures { sch_xyz: sch, side })
}
