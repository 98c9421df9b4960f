//! Analytic steady-state electro-thermal model of a half-bridge converter.
//!
//! The model replaces a time-domain switching simulation with closed-form
//! loss equations coupled to a lumped thermal network:
//!
//! ```text
//! p_out  = m * Vdc * I * kpf / 4
//! P_cond = Vce0 * I / pi + r_on(Tj) * I^2 / 4,   r_on(T) = r_on25 * (1 + tc * (T - 25))
//! P_sw   = k_sw * f_sw * Vdc * I * (1 + k_g * R_g)
//! Tj     = T_amb + (P_cond(Tj) + P_sw) * (Rth_jc + Rth_hc + Rth_ha)
//! ```
//!
//! The junction temperature is found with a damped Picard iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{label_feasibility, LabeledSample};
use crate::rng;
use crate::{Error, Result};

pub const N_PARAMS: usize = 9;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "vdc",
    "mod_index",
    "i_out_amp",
    "power_factor",
    "f_sw",
    "r_gate",
    "t_ambient",
    "rth_ha",
    "rth_hc",
];

/// The nine design parameters `x1..x9` in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    /// DC link voltage [V].
    pub vdc: f64,
    /// Modulation index amplitude, in (0, 1].
    pub mod_index: f64,
    /// Output current amplitude [A].
    pub i_out_amp: f64,
    /// Load power factor, in (0, 1].
    pub power_factor: f64,
    /// Switching frequency [Hz].
    pub f_sw: f64,
    /// Gate resistance [ohm].
    pub r_gate: f64,
    /// Ambient temperature [degC].
    pub t_ambient: f64,
    /// Heat sink to ambient thermal resistance [K/W].
    pub rth_ha: f64,
    /// Heat sink to case thermal resistance [K/W].
    pub rth_hc: f64,
}

impl DesignPoint {
    pub fn from_array(x: [f64; N_PARAMS]) -> Self {
        DesignPoint {
            vdc: x[0],
            mod_index: x[1],
            i_out_amp: x[2],
            power_factor: x[3],
            f_sw: x[4],
            r_gate: x[5],
            t_ambient: x[6],
            rth_ha: x[7],
            rth_hc: x[8],
        }
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let arr: [f64; N_PARAMS] = x
            .try_into()
            .map_err(|_| Error::domain(format!("expected {N_PARAMS} design parameters, got {}", x.len())))?;
        Ok(Self::from_array(arr))
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [
            self.vdc,
            self.mod_index,
            self.i_out_amp,
            self.power_factor,
            self.f_sw,
            self.r_gate,
            self.t_ambient,
            self.rth_ha,
            self.rth_hc,
        ]
    }

    /// Checks the bounds-independent invariants (finiteness and signs).
    pub fn validate(&self) -> Result<()> {
        let x = self.to_array();
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{} is not finite", PARAM_NAMES[i])));
        }
        let positive = [
            ("vdc", self.vdc),
            ("f_sw", self.f_sw),
            ("r_gate", self.r_gate),
            ("rth_ha", self.rth_ha),
            ("rth_hc", self.rth_hc),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("mod_index", self.mod_index), ("power_factor", self.power_factor)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Inclusive per-parameter `(lower, upper)` ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub ranges: [(f64, f64); N_PARAMS],
}

impl Default for ParameterBounds {
    fn default() -> Self {
        ParameterBounds {
            ranges: [
                (200.0, 800.0),
                (0.1, 1.0),
                (1.0, 50.0),
                (0.3, 1.0),
                (1.0e3, 100.0e3),
                (1.0, 50.0),
                (0.0, 50.0),
                (0.1, 2.0),
                (0.01, 0.5),
            ],
        }
    }
}

impl ParameterBounds {
    pub fn new(ranges: [(f64, f64); N_PARAMS]) -> Result<Self> {
        let b = ParameterBounds { ranges };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::domain(format!(
                    "invalid bounds for {}: ({lo}, {hi})",
                    PARAM_NAMES[i]
                )));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> [f64; N_PARAMS] {
        self.ranges.map(|r| r.0)
    }

    pub fn upper(&self) -> [f64; N_PARAMS] {
        self.ranges.map(|r| r.1)
    }

    pub fn contains(&self, design: &DesignPoint) -> bool {
        design
            .to_array()
            .iter()
            .zip(self.ranges.iter())
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, design: &DesignPoint) -> Result<()> {
        design.validate()?;
        for (i, (v, (lo, hi))) in design.to_array().iter().zip(self.ranges.iter()).enumerate() {
            if *v < *lo || *v > *hi {
                return Err(Error::domain(format!("{} = {v} outside [{lo}, {hi}]", PARAM_NAMES[i])));
            }
        }
        Ok(())
    }

    /// Uniform independent draw of every parameter.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> DesignPoint {
        let mut x = [0.0; N_PARAMS];
        for (xi, (lo, hi)) in x.iter_mut().zip(self.ranges.iter()) {
            *xi = lo + (hi - lo) * rng.random::<f64>();
        }
        DesignPoint::from_array(x)
    }
}

/// Device and package constants of the loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConstants {
    /// Threshold (knee) voltage of the switch [V].
    pub vce0: f64,
    /// On-resistance at 25 degC [ohm].
    pub r_on_25: f64,
    /// Linear temperature coefficient of the on-resistance [1/K].
    pub r_on_tc: f64,
    /// Switching energy per commutated volt-ampere, averaged over a
    /// fundamental period [J/(V*A)].
    pub k_sw: f64,
    /// Relative switching-energy increase per ohm of gate resistance [1/ohm].
    pub k_g: f64,
    /// Junction to case thermal resistance [K/W].
    pub rth_jc: f64,
}

impl Default for DeviceConstants {
    fn default() -> Self {
        DeviceConstants {
            vce0: 0.8,
            r_on_25: 0.02,
            r_on_tc: 0.006,
            k_sw: 2.5e-8,
            k_g: 0.02,
            rth_jc: 0.1,
        }
    }
}

impl DeviceConstants {
    /// On-resistance at junction temperature `t_junction`, floored at zero.
    pub fn r_on(&self, t_junction: f64) -> f64 {
        (self.r_on_25 * (1.0 + self.r_on_tc * (t_junction - 25.0))).max(0.0)
    }
}

/// Damped Picard iteration settings for the electro-thermal fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSolver {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Temperature treated as thermal runaway [degC].
    pub runaway_ceiling: f64,
}

impl Default for ThermalSolver {
    fn default() -> Self {
        ThermalSolver {
            damping: 0.5,
            tolerance: 1e-6,
            max_iterations: 200,
            runaway_ceiling: 250.0,
        }
    }
}

/// Currents from the output relations of the half-bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputCurrents {
    /// Peak output current [A].
    pub i_o: f64,
    /// RMS output current [A].
    pub i_or: f64,
    /// RMS output current weighted by the power factor [A].
    pub i_orf: f64,
    /// Input (source side) current for active power `p` [A].
    pub i_in: f64,
}

/// Output and input currents for a resistive load `r_load` and delivered
/// active power `p`. The input voltage is the DC link voltage.
pub fn output_currents(design: &DesignPoint, r_load: f64, p: f64) -> Result<OutputCurrents> {
    if !(r_load > 0.0) {
        return Err(Error::domain(format!("load resistance must be positive, got {r_load}")));
    }
    if !(design.power_factor > 0.0) {
        return Err(Error::domain("power factor must be positive"));
    }
    if !(design.vdc > 0.0) {
        return Err(Error::domain("dc link voltage must be positive"));
    }
    let m_vdc = design.mod_index * design.vdc;
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(OutputCurrents {
        i_o: m_vdc / (2.0 * r_load),
        i_or: m_vdc / (2.0 * sqrt2 * r_load),
        i_orf: m_vdc * design.power_factor / (2.0 * sqrt2 * r_load),
        i_in: p / (design.vdc * design.power_factor),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub loss_conduction: f64,
    pub loss_switching: f64,
    pub p_out: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.loss_conduction + self.loss_switching
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Efficiency `y1`, in [0, 1].
    pub efficiency: f64,
    /// Junction temperature `y2` [degC].
    pub temperature: f64,
    pub loss_conduction: f64,
    pub loss_switching: f64,
    pub p_out: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SimulationResult {
    pub fn total_loss(&self) -> f64 {
        self.loss_conduction + self.loss_switching
    }
}

/// The full electro-thermal model: device constants, solver settings and the
/// admissible design space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConverterModel {
    pub device: DeviceConstants,
    pub solver: ThermalSolver,
    pub bounds: ParameterBounds,
}

impl ConverterModel {
    pub fn loss_model(&self, design: &DesignPoint, t_junction: f64) -> Losses {
        let d = &self.device;
        let i = design.i_out_amp;
        let p_out = design.mod_index * design.vdc * i * design.power_factor / 4.0;
        let loss_conduction = d.vce0 * i / std::f64::consts::PI + d.r_on(t_junction) * i * i / 4.0;
        let loss_switching = d.k_sw * design.f_sw * design.vdc * i * (1.0 + d.k_g * design.r_gate);
        Losses {
            loss_conduction: loss_conduction.max(0.0),
            loss_switching: loss_switching.max(0.0),
            p_out: p_out.max(0.0),
        }
    }

    /// Total thermal resistance from junction to ambient [K/W].
    pub fn rth_total(&self, design: &DesignPoint) -> f64 {
        self.device.rth_jc + design.rth_hc + design.rth_ha
    }

    /// Right-hand side of the thermal fixed point, `T_amb + P_loss(T) * Rth`.
    pub fn thermal_map(&self, design: &DesignPoint, t_junction: f64) -> f64 {
        design.t_ambient + self.loss_model(design, t_junction).total() * self.rth_total(design)
    }

    /// Solves the electro-thermal fixed point for a design inside the bounds.
    pub fn evaluate(&self, design: &DesignPoint) -> Result<SimulationResult> {
        self.bounds.check(design)?;
        Ok(self.solve(design))
    }

    /// Fixed point solve without the bounds check.
    pub fn solve(&self, design: &DesignPoint) -> SimulationResult {
        let s = &self.solver;
        let mut t = design.t_ambient;
        let mut converged = false;
        let mut runaway = false;
        let mut iterations = 0;
        while iterations < s.max_iterations {
            let residual = self.thermal_map(design, t) - t;
            if residual.abs() < s.tolerance {
                converged = true;
                break;
            }
            t += s.damping * residual;
            iterations += 1;
            if t > s.runaway_ceiling || !t.is_finite() {
                runaway = true;
                break;
            }
        }
        if !converged && !runaway {
            // Iteration cap: accept the last iterate if it is already within tolerance.
            converged = (self.thermal_map(design, t) - t).abs() < s.tolerance;
        }
        let temperature = if converged { t } else { t.min(s.runaway_ceiling) };
        let losses = self.loss_model(design, temperature);
        let denom = losses.p_out + losses.total();
        let efficiency = if denom > 0.0 {
            (losses.p_out / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        SimulationResult {
            efficiency,
            temperature: if converged { temperature } else { s.runaway_ceiling },
            loss_conduction: losses.loss_conduction,
            loss_switching: losses.loss_switching,
            p_out: losses.p_out,
            converged,
            iterations,
        }
    }

    /// `n` uniformly sampled and labeled designs. Sample `i` draws from
    /// stream `i` of the generator, so the output does not depend on how the
    /// work is partitioned.
    pub fn generate_dataset(&self, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
        if n == 0 {
            return Err(Error::domain("dataset size must be at least 1"));
        }
        self.bounds.validate()?;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, i as u64);
                let x = self.bounds.sample(&mut r);
                let sim = self.solve(&x);
                let feasible = label_feasibility(sim.efficiency, sim.temperature)?;
                Ok(LabeledSample {
                    x,
                    y1: sim.efficiency,
                    y2: sim.temperature,
                    feasible,
                })
            })
            .collect()
    }
}

/// [`ConverterModel::loss_model`] with the default constants.
pub fn loss_model(design: &DesignPoint, t_junction: f64) -> Losses {
    ConverterModel::default().loss_model(design, t_junction)
}

/// [`ConverterModel::evaluate`] with the default constants and bounds.
pub fn evaluate_design(design: &DesignPoint) -> Result<SimulationResult> {
    ConverterModel::default().evaluate(design)
}

/// [`ConverterModel::generate_dataset`] with the default constants.
pub fn generate_dataset(n: usize, bounds: ParameterBounds, seed: u64) -> Result<Vec<LabeledSample>> {
    ConverterModel {
        bounds,
        ..Default::default()
    }
    .generate_dataset(n, seed)
}

/// Mid-range design used in examples and tests.
pub fn nominal_design() -> DesignPoint {
    let b = ParameterBounds::default();
    let mut x = [0.0; N_PARAMS];
    for (xi, (lo, hi)) in x.iter_mut().zip(b.ranges.iter()) {
        *xi = 0.5 * (lo + hi);
    }
    DesignPoint::from_array(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn design(m: f64, vdc: f64, pf: f64) -> DesignPoint {
        DesignPoint {
            mod_index: m,
            vdc,
            power_factor: pf,
            ..nominal_design()
        }
    }

    #[test]
    fn output_current_examples() {
        let c = output_currents(&design(0.8, 400.0, 1.0), 8.0, 0.0).unwrap();
        assert_abs_diff_eq!(c.i_o, 20.0, epsilon = 1e-12);

        let c = output_currents(&design(0.0, 400.0, 1.0), 8.0, 0.0).unwrap();
        assert_eq!((c.i_o, c.i_or, c.i_orf), (0.0, 0.0, 0.0));

        let c = output_currents(&design(1.0, 400.0, 1.0), 10.0, 0.0).unwrap();
        assert_abs_diff_eq!(c.i_orf, 14.142135623730951, epsilon = 1e-4);

        let c = output_currents(&design(1.0, 400.0, 0.5), 10.0, 1000.0).unwrap();
        assert_abs_diff_eq!(c.i_in, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn output_currents_reject_bad_inputs() {
        assert!(output_currents(&design(0.8, 400.0, 1.0), 0.0, 0.0).is_err());
        assert!(output_currents(&design(0.8, 400.0, 1.0), -1.0, 0.0).is_err());
        assert!(output_currents(&design(0.8, 400.0, 0.0), 8.0, 0.0).is_err());
    }

    #[test]
    fn lossless_limit() {
        let model = ConverterModel {
            device: DeviceConstants {
                vce0: 0.0,
                r_on_25: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let d = DesignPoint {
            f_sw: 1e-300,
            ..nominal_design()
        };
        let l = model.loss_model(&d, 80.0);
        assert_eq!(l.loss_conduction, 0.0);
        assert!(l.loss_switching < 1e-250);
        let sim = model.solve(&d);
        assert!(sim.converged);
        assert_abs_diff_eq!(sim.efficiency, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sim.temperature, d.t_ambient, epsilon = 1e-12);
    }

    // Values from evaluating the closed-form loss formulas by hand for the
    // mid-range design at Tj = 80 degC.
    #[test]
    fn nominal_losses_match_hand_evaluation() {
        let d = nominal_design();
        let l = loss_model(&d, 80.0);
        // p_out = 0.55 * 500 * 25.5 * 0.65 / 4
        assert_abs_diff_eq!(l.p_out, 1139.53125, epsilon = 1e-9);
        // 0.8 * 25.5 / pi + 0.02 * (1 + 0.006 * 55) * 25.5^2 / 4
        assert_abs_diff_eq!(l.loss_conduction, 10.817684178149332, epsilon = 1e-9);
        // 2.5e-8 * 50500 * 500 * 25.5 * (1 + 0.02 * 25.5)
        assert_abs_diff_eq!(l.loss_switching, 24.30628125, epsilon = 1e-9);
    }

    #[test]
    fn nominal_fixed_point_matches_closed_form() {
        // The loss is affine in Tj, P(T) = A + B * T, so the fixed point is
        // T* = (Ta + A * R) / (1 - B * R).
        let d = nominal_design();
        let c = DeviceConstants::default();
        let i = d.i_out_amp;
        let b = c.r_on_25 * c.r_on_tc * i * i / 4.0;
        let a = c.vce0 * i / std::f64::consts::PI
            + c.r_on_25 * (1.0 - 25.0 * c.r_on_tc) * i * i / 4.0
            + c.k_sw * d.f_sw * d.vdc * i * (1.0 + c.k_g * d.r_gate);
        let r = c.rth_jc + d.rth_hc + d.rth_ha;
        let t_star = (d.t_ambient + a * r) / (1.0 - b * r);
        let sim = evaluate_design(&d).unwrap();
        assert!(sim.converged);
        assert_abs_diff_eq!(sim.temperature, t_star, epsilon = 1e-6);
        assert_abs_diff_eq!(t_star, 74.18992877658066, epsilon = 1e-6);
        let p = sim.p_out;
        let eff = p / (p + sim.total_loss());
        assert_abs_diff_eq!(sim.efficiency, eff, epsilon = 1e-15);
    }

    #[test]
    fn runaway_is_reported_at_ceiling() {
        let d = DesignPoint {
            vdc: 800.0,
            i_out_amp: 50.0,
            f_sw: 100e3,
            r_gate: 50.0,
            rth_ha: 2.0,
            rth_hc: 0.5,
            t_ambient: 50.0,
            ..nominal_design()
        };
        let sim = evaluate_design(&d).unwrap();
        assert!(!sim.converged);
        assert_eq!(sim.temperature, 250.0);
        assert!((0.0..=1.0).contains(&sim.efficiency));
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let d = DesignPoint {
            vdc: 1000.0,
            ..nominal_design()
        };
        assert!(matches!(evaluate_design(&d), Err(Error::Domain(_))));
        let d = DesignPoint {
            rth_ha: f64::NAN,
            ..nominal_design()
        };
        assert!(evaluate_design(&d).is_err());
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = generate_dataset(1, ParameterBounds::default(), 11).unwrap();
        let b = generate_dataset(1, ParameterBounds::default(), 11).unwrap();
        assert_eq!(a, b);
        assert!(generate_dataset(0, ParameterBounds::default(), 11).is_err());
        let c = generate_dataset(3, ParameterBounds::default(), 11).unwrap();
        assert_eq!(a[0], c[0]);
    }

    #[test]
    fn infeasible_fraction_band() {
        let data = generate_dataset(5000, ParameterBounds::default(), 2024).unwrap();
        let frac = data.iter().filter(|s| !s.feasible).count() as f64 / data.len() as f64;
        assert!((0.05..=0.45).contains(&frac), "infeasible fraction {frac}");
    }

    #[test]
    fn bounds_validation() {
        let mut r = ParameterBounds::default().ranges;
        r[3] = (1.0, 0.5);
        assert!(ParameterBounds::new(r).is_err());
    }
}
