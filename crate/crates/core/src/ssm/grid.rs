use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sensors on a square lattice, indexed row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    side: usize,
    positions: Vec<[f64; 2]>,
}

impl SensorGrid {
    /// `d` sensors on `{1..sqrt(d)} x {1..sqrt(d)}`; `d` must be a perfect square.
    pub fn new(d: usize) -> Result<Self> {
        let side = (d as f64).sqrt().round() as usize;
        if d == 0 || side * side != d {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: format!("sensor count must be a positive perfect square, got {d}"),
            });
        }
        Ok(Self::lattice(side, 1.0, 1.0))
    }

    /// `side x side` sensors at `origin + spacing * {0..side-1}` along each axis.
    pub fn lattice(side: usize, origin: f64, spacing: f64) -> Self {
        let positions = (0..side * side)
            .map(|i| {
                [
                    origin + spacing * (i % side) as f64,
                    origin + spacing * (i / side) as f64,
                ]
            })
            .collect();
        Self { side, positions }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }
}

/// `Σ_ij = alpha0 exp(-|R_i - R_j|² / beta) + alpha1 δ_ij` over the grid positions.
pub fn build_dispersion_matrix(grid: &SensorGrid, alpha0: f64, alpha1: f64, beta: f64) -> Result<DMatrix<f64>> {
    if !(alpha0 >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha0",
            reason: format!("must be >= 0, got {alpha0}"),
        });
    }
    if !(alpha1 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha1",
            reason: format!("must be > 0, got {alpha1}"),
        });
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("must be > 0, got {beta}"),
        });
    }
    let p = grid.positions();
    let d = p.len();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let dx = p[i][0] - p[j][0];
        let dy = p[i][1] - p[j][1];
        let mut v = alpha0 * (-(dx * dx + dy * dy) / beta).exp();
        if i == j {
            v += alpha1;
        }
        v
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Cholesky;

    #[test]
    fn grid_positions_are_row_major_integers() {
        let g = SensorGrid::new(9).unwrap();
        assert_eq!(g.positions()[0], [1.0, 1.0]);
        assert_eq!(g.positions()[1], [2.0, 1.0]);
        assert_eq!(g.positions()[3], [1.0, 2.0]);
        assert_eq!(g.positions()[8], [3.0, 3.0]);
        assert!(SensorGrid::new(10).is_err());
        assert!(SensorGrid::new(0).is_err());
    }

    #[test]
    fn dispersion_diagonal_and_neighbour_entries() {
        let g = SensorGrid::new(4).unwrap();
        let s = build_dispersion_matrix(&g, 3.0, 0.01, 20.0).unwrap();
        assert!((s[(0, 0)] - 3.01).abs() < 1e-15);
        // sensors 0 and 1 are one unit apart
        assert!((s[(0, 1)] - 3.0 * (-1.0f64 / 20.0).exp()).abs() < 1e-15);
        assert!((s[(0, 1)] - 2.8537).abs() < 1e-4);
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn zero_alpha0_gives_scaled_identity() {
        let g = SensorGrid::new(16).unwrap();
        let s = build_dispersion_matrix(&g, 0.0, 0.5, 20.0).unwrap();
        assert_eq!(s, DMatrix::identity(16, 16) * 0.5);
    }

    #[test]
    fn dispersion_is_positive_definite_for_scenario_sizes() {
        for d in [16, 64, 144, 400] {
            let g = SensorGrid::new(d).unwrap();
            let s = build_dispersion_matrix(&g, 3.0, 0.01, 20.0).unwrap();
            assert!(Cholesky::new(s).is_some(), "d={d}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = SensorGrid::new(4).unwrap();
        assert!(build_dispersion_matrix(&g, -1.0, 0.01, 20.0).is_err());
        assert!(build_dispersion_matrix(&g, 3.0, 0.0, 20.0).is_err());
        assert!(build_dispersion_matrix(&g, 3.0, 0.01, 0.0).is_err());
    }
}
