use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LinewidthEstimate, LinewidthMethod};
use crate::eit::{CascadeSystem, Medium};
use crate::{Error, Result};

/// Parameters of the cold-cloud spectrum model
/// `y(δ) = baseline + amplitude · |t(δ − center)|²`.
///
/// `omega_c`, `gamma_rel_laser` and `center` are angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub omega_c: f64,
    pub gamma_rel_laser: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub center: f64,
}

/// Which parameters the fit may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeParams {
    pub omega_c: bool,
    pub gamma_rel_laser: bool,
    pub amplitude: bool,
    pub baseline: bool,
    pub center: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        Self {
            omega_c: true,
            gamma_rel_laser: true,
            amplitude: true,
            baseline: false,
            center: true,
        }
    }
}

impl FreeParams {
    fn mask(&self) -> [bool; 5] {
        [
            self.omega_c,
            self.gamma_rel_laser,
            self.amplitude,
            self.baseline,
            self.center,
        ]
    }
}

/// Internal scale of the center parameter, rad/s.
const CENTER_UNIT: f64 = 2.0 * std::f64::consts::PI * 1e6;

pub const PARAM_NAMES: [&str; 5] = ["omega_c", "gamma_rel_laser", "amplitude", "baseline", "center"];

/// Fixed part of the model: everything in `system` except the two fitted
/// rates, which are overwritten per evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColdEitModel {
    pub system: CascadeSystem,
    pub free: FreeParams,
}

impl ColdEitModel {
    pub fn new(system: CascadeSystem) -> Self {
        Self {
            system,
            free: FreeParams::default(),
        }
    }

    pub fn evaluate(&self, p: &FitParams, detunings: &[f64]) -> Result<Vec<f64>> {
        let mut sys = self.system.with_omega_c(p.omega_c);
        sys.rates.gamma_rel_laser = p.gamma_rel_laser;
        let medium = Medium::cold(sys)?;
        detunings
            .iter()
            .map(|&d| {
                medium
                    .transmission(d - p.center, 0.0)
                    .map(|t| p.baseline + p.amplitude * t.norm_sqr())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest cosine between the residual
    /// vector and any Jacobian column.
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// One-sigma uncertainties in the units of `params`; zero for fixed
    /// parameters.
    pub uncertainties: FitParams,
    /// Names of the free parameters, in covariance order.
    pub free_names: Vec<String>,
    /// Covariance of the free parameters in internal coordinates
    /// (logarithms of the two rates, MHz-scaled center).
    pub covariance: Vec<Vec<f64>>,
    /// Euclidean norm of the weighted residuals.
    pub residual_norm: f64,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl FitResult {
    /// Residual laser linewidth `γ_rel / 2π`, Hz.
    pub fn linewidth(&self, scan_time_s: f64) -> LinewidthEstimate {
        let tau = 2.0 * std::f64::consts::PI;
        LinewidthEstimate {
            value: self.params.gamma_rel_laser / tau,
            uncertainty: self.uncertainties.gamma_rel_laser / tau,
            method: LinewidthMethod::SpectrumFit,
            window_s: scan_time_s,
            bandwidth_hz: None,
            upper_bound: false,
        }
    }
}

fn to_internal(p: &FitParams) -> [f64; 5] {
    [
        p.omega_c.ln(),
        p.gamma_rel_laser.ln(),
        p.amplitude,
        p.baseline,
        p.center / CENTER_UNIT,
    ]
}

fn from_internal(x: &[f64; 5]) -> FitParams {
    FitParams {
        omega_c: x[0].exp(),
        gamma_rel_laser: x[1].exp(),
        amplitude: x[2],
        baseline: x[3],
        center: x[4] * CENTER_UNIT,
    }
}

struct Problem<'a> {
    model: &'a ColdEitModel,
    x: &'a [f64],
    y: &'a [f64],
    inv_sigma: f64,
    base: [f64; 5],
    free: Vec<usize>,
}

impl Problem<'_> {
    fn full(&self, theta: &DVector<f64>) -> [f64; 5] {
        let mut v = self.base;
        for (j, &k) in self.free.iter().enumerate() {
            v[k] = theta[j];
        }
        v
    }

    fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let model = self.model.evaluate(&from_internal(&self.full(theta)), self.x)?;
        Ok(DVector::from_iterator(
            self.y.len(),
            model.iter().zip(self.y).map(|(m, y)| (m - y) * self.inv_sigma),
        ))
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.y.len(), theta.len());
        for j in 0..theta.len() {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let mut up = theta.clone();
            up[j] += h;
            let mut down = theta.clone();
            down[j] -= h;
            let d = (self.residuals(&up)? - self.residuals(&down)?) / (2.0 * h);
            jac.set_column(j, &d);
        }
        Ok(jac)
    }
}

fn scaled_gradient(jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    (0..jac.ncols())
        .map(|j| {
            let cn = jac.column(j).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[j].abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Levenberg-Marquardt fit of the cold-cloud EIT model to a probe-detuning
/// spectrum. `sigma` is the per-point noise level; when `None` the residual
/// scatter sets the covariance scale.
pub fn fit_cold_eit(
    detunings: &[f64],
    data: &[f64],
    sigma: Option<f64>,
    model: &ColdEitModel,
    initial: &FitParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    if detunings.len() != data.len() {
        return Err(Error::invalid("fit.data", "detunings and data differ in length"));
    }
    if !(initial.omega_c > 0.0 && initial.gamma_rel_laser > 0.0) {
        return Err(Error::invalid("fit.initial", "omega_c and gamma_rel_laser must be > 0"));
    }
    if let Some(s) = sigma {
        if !(s > 0.0) {
            return Err(Error::invalid("fit.sigma", "must be > 0"));
        }
    }
    let free: Vec<usize> = (0..5).filter(|&k| model.free.mask()[k]).collect();
    if free.is_empty() {
        return Err(Error::invalid("fit.free", "at least one parameter must be free"));
    }
    if data.len() <= free.len() {
        return Err(Error::InsufficientSamples {
            needed: free.len() + 1,
            available: data.len(),
        });
    }
    let base = to_internal(initial);
    let prob = Problem {
        model,
        x: detunings,
        y: data,
        inv_sigma: sigma.map_or(1.0, |s| 1.0 / s),
        base,
        free: free.clone(),
    };

    let mut theta = DVector::from_iterator(free.len(), free.iter().map(|&k| base[k]));
    let mut r = prob.residuals(&theta)?;
    let mut cost = r.norm_squared();
    let mut jac = prob.jacobian(&theta)?;
    if (0..jac.ncols()).any(|j| jac.column(j).norm() == 0.0) {
        return Err(Error::DegenerateJacobian);
    }
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let floor = 1e-10 * prob.inv_sigma * data.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let done = |grad: f64, r: &DVector<f64>| grad <= opts.gradient_tolerance || r.norm() <= floor;
    let mut grad = scaled_gradient(&jac, &r);
    while !done(grad, &r) && iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for j in 0..a.ncols() {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let trial = &theta - chol.solve(&g);
            match prob.residuals(&trial) {
                Ok(rt) if rt.norm_squared() < cost => {
                    theta = trial;
                    r = rt;
                    cost = r.norm_squared();
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        jac = prob.jacobian(&theta)?;
        grad = scaled_gradient(&jac, &r);
        if !improved {
            break;
        }
    }
    if !done(grad, &r) {
        return Err(Error::FitNotConverged {
            iterations,
            gradient_norm: grad,
        });
    }

    let dof = (data.len() - free.len()) as f64;
    let reduced = cost / dof;
    let jtj = jac.transpose() * &jac;
    let inv = jtj.cholesky().ok_or(Error::DegenerateJacobian)?.inverse();
    let scale = if sigma.is_some() { 1.0 } else { reduced };
    let cov = inv * scale;

    let full = prob.full(&theta);
    let params = from_internal(&full);
    let mut sd = [0.0; 5];
    for (j, &k) in free.iter().enumerate() {
        sd[k] = cov[(j, j)].max(0.0).sqrt();
    }
    let uncertainties = FitParams {
        omega_c: params.omega_c * sd[0],
        gamma_rel_laser: params.gamma_rel_laser * sd[1],
        amplitude: sd[2],
        baseline: sd[3],
        center: sd[4] * CENTER_UNIT,
    };
    Ok(FitResult {
        params,
        uncertainties,
        free_names: free.iter().map(|&k| PARAM_NAMES[k].to_string()).collect(),
        covariance: (0..free.len())
            .map(|i| (0..free.len()).map(|j| cov[(i, j)]).collect())
            .collect(),
        residual_norm: cost.sqrt(),
        reduced_chi_square: reduced,
        iterations,
        gradient_norm: grad,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::seed;
    use crate::units::mhz_to_angular;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn truth() -> FitParams {
        FitParams {
            omega_c: mhz_to_angular(2.0),
            gamma_rel_laser: mhz_to_angular(0.28),
            amplitude: 1.0,
            baseline: 0.0,
            center: 0.0,
        }
    }

    fn grid() -> Vec<f64> {
        crate::eit::linspace(mhz_to_angular(-8.0), mhz_to_angular(8.0), 321)
    }

    fn guess() -> FitParams {
        FitParams {
            omega_c: mhz_to_angular(2.6),
            gamma_rel_laser: mhz_to_angular(0.5),
            amplitude: 0.9,
            baseline: 0.0,
            center: mhz_to_angular(0.1),
        }
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let model = ColdEitModel::new(presets::cold_cloud());
        let x = grid();
        let y = model.evaluate(&truth(), &x).unwrap();
        let fit = fit_cold_eit(&x, &y, None, &model, &guess(), &FitOptions::default()).unwrap();
        let t = truth();
        assert!((fit.params.omega_c / t.omega_c - 1.0).abs() < 1e-4);
        assert!((fit.params.gamma_rel_laser / t.gamma_rel_laser - 1.0).abs() < 1e-4);
        assert!((fit.params.amplitude - 1.0).abs() < 1e-4);
        assert!(fit.params.center.abs() < 1e-4 * CENTER_UNIT);
        assert!(fit.converged);
        assert_eq!(fit.free_names, ["omega_c", "gamma_rel_laser", "amplitude", "center"]);
    }

    #[test]
    fn noisy_fit_has_unit_reduced_chi_square() {
        let model = ColdEitModel::new(presets::cold_cloud());
        let x = grid();
        let sigma = 0.005;
        let mut rng = seed::rng(11, "test.fit");
        let y: Vec<f64> = model
            .evaluate(&truth(), &x)
            .unwrap()
            .into_iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = fit_cold_eit(&x, &y, Some(sigma), &model, &guess(), &FitOptions::default()).unwrap();
        assert!((fit.reduced_chi_square - 1.0).abs() < 0.2, "{}", fit.reduced_chi_square);
        let lw = fit.linewidth(1e-3);
        assert!((lw.value - 280e3).abs() < 4.0 * lw.uncertainty + 1e3, "{lw:?}");
        assert_eq!(lw.method, LinewidthMethod::SpectrumFit);
    }

    #[test]
    fn insensitive_parameter_is_degenerate() {
        let mut sys = presets::cold_cloud();
        sys.vapor.peak_optical_depth = 0.0;
        let model = ColdEitModel::new(sys);
        let x = grid();
        let y = vec![1.0; x.len()];
        assert!(matches!(
            fit_cold_eit(&x, &y, None, &model, &guess(), &FitOptions::default()),
            Err(Error::DegenerateJacobian)
        ));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let model = ColdEitModel::new(presets::cold_cloud());
        let x = grid();
        let y = model.evaluate(&truth(), &x).unwrap();
        let opts = FitOptions {
            max_iterations: 1,
            ..Default::default()
        };
        assert!(matches!(
            fit_cold_eit(&x, &y, None, &model, &guess(), &opts),
            Err(Error::FitNotConverged { .. })
        ));
    }
}
