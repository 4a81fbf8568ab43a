//! Electrical description of the three-island circuit and the quantities
//! derived from it at a given external flux.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Circuit parameters. Capacitances in fF, Josephson energies in GHz.
///
/// Islands 1, 2, 3 connect to the center island 0 through junctions; island 3
/// through a SQUID. Ground capacitances are assumed absorbed into the
/// renormalized `c_ij` and `c0i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
    pub c01: f64,
    pub c02: f64,
    pub c03: f64,
    pub ej1: f64,
    pub ej2: f64,
    /// Total SQUID Josephson energy at zero flux.
    pub ej3_sum: f64,
    /// SQUID junction asymmetry d_s in [0, 1).
    #[serde(default)]
    pub squid_asym: f64,
    /// Gate charge per island in units of 2e.
    #[serde(default)]
    pub offset_charges: [f64; 3],
}

impl CircuitParams {
    /// A circuit with `c13 = c23`, equal center capacitances and equal junctions.
    pub fn symmetric(c12: f64, c13: f64, c0: f64, ej: f64) -> Self {
        CircuitParams {
            c12,
            c13,
            c23: c13,
            c01: c0,
            c02: c0,
            c03: c0,
            ej1: ej,
            ej2: ej,
            ej3_sum: ej,
            squid_asym: 0.0,
            offset_charges: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let caps = [
            ("c12", self.c12),
            ("c13", self.c13),
            ("c23", self.c23),
            ("c01", self.c01),
            ("c02", self.c02),
            ("c03", self.c03),
        ];
        for (name, c) in caps {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(name, format!("capacitance must be positive, got {c}")));
            }
        }
        for (name, ej) in [("ej1", self.ej1), ("ej2", self.ej2), ("ej3_sum", self.ej3_sum)] {
            if !(ej >= 0.0 && ej.is_finite()) {
                return Err(Error::invalid(name, format!("Josephson energy must be non-negative, got {ej}")));
            }
        }
        if !(0.0..1.0).contains(&self.squid_asym) {
            return Err(Error::invalid(
                "squid_asym",
                format!("must lie in [0, 1), got {}", self.squid_asym),
            ));
        }
        if self.offset_charges.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("offset_charges", "must be finite"));
        }
        Ok(())
    }

    /// Josephson energies (E_J1, E_J2, E_J3(φ)) of the three junction branches.
    pub fn josephson_energies(&self, flux: FluxBias) -> [f64; 3] {
        [self.ej1, self.ej2, squid_effective_ej(self, flux)]
    }
}

/// Reduced external flux through the SQUID loop, in units of φ0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct FluxBias(pub f64);

impl FluxBias {
    /// Readout point, φ = 0.
    pub const READOUT: FluxBias = FluxBias(0.0);
    /// Control point, φ = φ0/2.
    pub const CONTROL: FluxBias = FluxBias(0.5);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for FluxBias {
    fn from(phi: f64) -> Self {
        FluxBias(phi)
    }
}

/// Flux-tuned Josephson energy of the SQUID,
/// `E_J3(φ) = E_JΣ |cos πφ| sqrt(1 + d² tan² πφ)`.
pub fn squid_effective_ej(params: &CircuitParams, flux: FluxBias) -> f64 {
    // Evaluated as sqrt(cos² + d² sin²) to stay finite at half flux.
    let x = PI * flux.0;
    let (s, c) = x.sin_cos();
    let d = params.squid_asym;
    params.ej3_sum * (c * c + d * d * s * s).sqrt()
}

/// Symmetric, positive-definite 3×3 node capacitance matrix in fF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitanceMatrix(Matrix3<f64>);

impl CapacitanceMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Inverse capacitance matrix in 1/fF.
    pub fn inverse(&self) -> Matrix3<f64> {
        // positive definite by construction
        self.0.try_inverse().expect("capacitance matrix is invertible")
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let eig = SymmetricEigen::new(self.0);
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
        ev.sort_by(f64::total_cmp);
        ev
    }
}

pub fn build_capacitance_matrix(params: &CircuitParams) -> Result<CapacitanceMatrix> {
    let p = params;
    #[rustfmt::skip]
    let c = Matrix3::new(
        p.c12 + p.c13 + p.c01, -p.c12,                -p.c13,
        -p.c12,                p.c12 + p.c23 + p.c02, -p.c23,
        -p.c13,                -p.c23,                p.c13 + p.c23 + p.c03,
    );
    if c.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(CapacitanceMatrix(c))
}

/// Asymmetry and sum quantities that drive the mode-mode couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymmetryMetrics {
    /// C_Δ3 = C13 − C23 (fF).
    pub c_delta3: f64,
    /// E_JΔ = E_J1 − E_J2 (GHz).
    pub ej_delta: f64,
    /// E_JΣ = E_J1 + E_J2 (GHz).
    pub ej_sigma: f64,
    /// E_ΔJ123 = 2 E_J3(φ) − E_J1 − E_J2 (GHz); drives g_BC.
    pub ej_delta_123: f64,
}

pub fn asymmetry_metrics(params: &CircuitParams, flux: FluxBias) -> AsymmetryMetrics {
    let ej3 = squid_effective_ej(params, flux);
    AsymmetryMetrics {
        c_delta3: params.c13 - params.c23,
        ej_delta: params.ej1 - params.ej2,
        ej_sigma: params.ej1 + params.ej2,
        ej_delta_123: 2.0 * ej3 - params.ej1 - params.ej2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn squid(ej3_sum: f64, d: f64) -> CircuitParams {
        CircuitParams {
            ej3_sum,
            squid_asym: d,
            ..CircuitParams::symmetric(60.0, 50.0, 5.0, 20.0)
        }
    }

    #[test]
    fn squid_energy_at_special_points() {
        let p = squid(20.0, 0.0);
        assert_eq!(squid_effective_ej(&p, FluxBias(0.0)), 20.0);
        assert!(squid_effective_ej(&p, FluxBias(0.5)).abs() < 1e-14);
        let quarter = squid_effective_ej(&p, FluxBias(0.25));
        assert!((quarter - 20.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_squid_minimum_is_d_times_sum() {
        let p = squid(20.0, 0.1);
        let min = (0..=1000)
            .map(|k| squid_effective_ej(&p, FluxBias(k as f64 / 1000.0)))
            .fold(f64::INFINITY, f64::min);
        assert!((min - 2.0).abs() < 1e-12, "{min}");
    }

    #[test]
    fn capacitance_matrix_entries() {
        let p = CircuitParams {
            c12: 60.0,
            c13: 50.0,
            c23: 50.0,
            ..CircuitParams::symmetric(60.0, 50.0, 5.0, 20.0)
        };
        let c = build_capacitance_matrix(&p).unwrap();
        let m = c.matrix();
        assert_eq!(m[(0, 0)], 115.0);
        assert_eq!(m[(2, 2)], 105.0);
        assert_eq!(m[(0, 1)], -60.0);
        assert_eq!(m[(1, 0)], -60.0);

        let sym = build_capacitance_matrix(&CircuitParams::symmetric(40.0, 40.0, 3.0, 1.0)).unwrap();
        for i in 0..3 {
            assert_eq!(sym.matrix()[(i, i)], 83.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(sym.matrix()[(i, j)], -40.0);
                }
            }
        }
    }

    #[test]
    fn asymmetry_metrics_definitions() {
        let p = CircuitParams::symmetric(60.0, 50.0, 5.0, 20.0);
        let m = asymmetry_metrics(&p, FluxBias(0.0));
        assert_eq!((m.c_delta3, m.ej_delta, m.ej_sigma, m.ej_delta_123), (0.0, 0.0, 40.0, 0.0));

        let q = CircuitParams { c13: 51.0, c23: 49.0, ..p };
        assert_eq!(asymmetry_metrics(&q, FluxBias(0.0)).c_delta3, 2.0);
        // SQUID sign change between readout and control points
        assert!(asymmetry_metrics(&p, FluxBias::READOUT).ej_delta_123 >= 0.0);
        assert!(asymmetry_metrics(&p, FluxBias::CONTROL).ej_delta_123 < 0.0);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let p = CircuitParams::symmetric(60.0, 50.0, 5.0, 20.0);
        assert!(p.validate().is_ok());
        assert!(CircuitParams { c12: 0.0, ..p }.validate().is_err());
        assert!(CircuitParams { ej2: -1.0, ..p }.validate().is_err());
        assert!(CircuitParams { squid_asym: 1.0, ..p }.validate().is_err());
    }

    fn arb_params() -> impl Strategy<Value = CircuitParams> {
        (
            (1.0..200.0f64, 1.0..200.0f64, 1.0..200.0f64),
            (0.1..50.0f64, 0.1..50.0f64, 0.1..50.0f64),
            (1.0..50.0f64, 1.0..50.0f64, 1.0..50.0f64, 0.0..0.99f64),
        )
            .prop_map(|((c12, c13, c23), (c01, c02, c03), (ej1, ej2, ej3_sum, squid_asym))| {
                CircuitParams {
                    c12,
                    c13,
                    c23,
                    c01,
                    c02,
                    c03,
                    ej1,
                    ej2,
                    ej3_sum,
                    squid_asym,
                    offset_charges: [0.0; 3],
                }
            })
    }

    proptest! {
        #[test]
        fn squid_energy_is_periodic_and_even(p in arb_params(), phi in -3.0..3.0f64) {
            let e = squid_effective_ej(&p, FluxBias(phi));
            let shifted = squid_effective_ej(&p, FluxBias(phi + 1.0));
            let mirrored = squid_effective_ej(&p, FluxBias(-phi));
            prop_assert!((e - shifted).abs() <= 1e-12 * p.ej3_sum);
            prop_assert!((e - mirrored).abs() <= 1e-12 * p.ej3_sum);
        }

        #[test]
        fn capacitance_matrix_is_positive_definite(p in arb_params()) {
            let c = build_capacitance_matrix(&p).unwrap();
            prop_assert!(c.eigenvalues()[0] > 0.0);
            prop_assert!(c.matrix().iter().enumerate().all(|(k, &v)| k % 4 == 0 || v <= 0.0));
        }

        #[test]
        fn island_relabeling_permutes_matrix(p in arb_params()) {
            // swapping islands 1 and 2 maps c13 <-> c23 and c01 <-> c02
            let swapped = CircuitParams { c13: p.c23, c23: p.c13, c01: p.c02, c02: p.c01, ..p };
            let a = build_capacitance_matrix(&p).unwrap();
            let b = build_capacitance_matrix(&swapped).unwrap();
            let perm = [1usize, 0, 2];
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(a.matrix()[(i, j)], b.matrix()[(perm[i], perm[j])]);
                }
            }
        }
    }
}
