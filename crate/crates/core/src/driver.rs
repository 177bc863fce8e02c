//! Evaluation chain and optimization loop.
//!
//! Design variables are stored material-major: entry `i * NE + e` is the
//! variable of material `i` in element `e`.

use crate::error::{Error, Result};
use crate::fem::FeModel;
use crate::filtering::{
    project, projection_derivative, FilterConfig, HelmholtzFilter, ProjectionConfig,
    SensitivityFilter,
};
use crate::interpolation::{modulus_and_gradient, occupancy, occupancy_jacobian, MaterialSet, Scheme};
use crate::mma::{ConstraintSet, MmaParams, MmaState};
use crate::problem::{build_problem, ProblemSpec};

/// Initial value of every design variable.
pub const INITIAL_DESIGN: f64 = 0.5;
/// Allowed volume excess when declaring convergence.
pub const VOLUME_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationConfig {
    pub materials: MaterialSet,
    pub scheme: Scheme,
    pub filter: FilterConfig,
    /// Used only with the PDE filter.
    pub projection: ProjectionConfig,
    /// Volume fraction bound per material.
    pub volume_fractions: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once the largest design change drops below this.
    pub change_tolerance: f64,
    pub mma: MmaParams,
}

impl OptimizationConfig {
    pub fn new(
        materials: MaterialSet,
        scheme: Scheme,
        filter: FilterConfig,
        volume_fractions: Vec<f64>,
    ) -> Self {
        Self {
            materials,
            scheme,
            filter,
            projection: ProjectionConfig::default(),
            volume_fractions,
            max_iterations: 200,
            change_tolerance: 0.01,
            mma: MmaParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_len("volume fractions", self.materials.count(), self.volume_fractions.len())?;
        if let Some(v) = self.volume_fractions.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidMaterial(format!("volume fraction {v} outside (0, 1]")));
        }
        let total: f64 = self.volume_fractions.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidMaterial(format!("volume fractions sum to {total} > 1")));
        }
        self.filter.validate()?;
        if matches!(self.filter, FilterConfig::Pde { .. }) {
            self.projection.validate()?;
        }
        if self.max_iterations == 0 {
            return Err(Error::Optimizer("at least one iteration is required".into()));
        }
        if !(self.change_tolerance >= 0.0) {
            return Err(Error::Optimizer(format!(
                "change tolerance must be non-negative, got {}",
                self.change_tolerance
            )));
        }
        Ok(())
    }

    /// Projection sharpness at `iteration`, `None` without projection.
    pub fn beta(&self, iteration: usize) -> Option<f64> {
        match self.filter {
            FilterConfig::Pde { .. } => Some(self.projection.continuation_step(iteration)),
            FilterConfig::Sensitivity { .. } => None,
        }
    }
}

/// Raw, filtered and physical design fields, each `NM x NE` material-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignField {
    materials: usize,
    elements: usize,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
    pub physical: Vec<f64>,
}

impl DesignField {
    pub fn material_count(&self) -> usize {
        self.materials
    }

    pub fn element_count(&self) -> usize {
        self.elements
    }

    pub fn physical_of(&self, material: usize) -> &[f64] {
        &self.physical[material * self.elements..(material + 1) * self.elements]
    }

    /// Physical variables of one element, one per material.
    pub fn element_physical(&self, e: usize) -> Vec<f64> {
        (0..self.materials).map(|i| self.physical[i * self.elements + e]).collect()
    }

    /// Per-material occupancy fractions, material-major.
    pub fn occupancy(&self, scheme: Scheme) -> Vec<f64> {
        let (m, ne) = (self.materials, self.elements);
        let mut out = vec![0.0; m * ne];
        for e in 0..ne {
            let occ = occupancy(&self.element_physical(e), scheme);
            for i in 0..m {
                out[i * ne + e] = occ[i];
            }
        }
        out
    }
}

/// `M = sum 4 g (1 - g) / NE` over one material's field.
pub fn grayness_of(field: &[f64]) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    field.iter().map(|&g| 4.0 * g * (1.0 - g)).sum::<f64>() / field.len() as f64
}

/// Grayness of every material's occupancy.
pub fn grayness(design: &DesignField, scheme: Scheme) -> Vec<f64> {
    let occ = design.occupancy(scheme);
    occ.chunks(design.elements).map(grayness_of).collect()
}

/// Compliance, volumes and their derivatives with respect to the raw design.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub compliance: f64,
    /// Volume fraction per material.
    pub volumes: Vec<f64>,
    /// What the optimizer sees: sensitivity-filtered in that mode, otherwise
    /// identical to `exact_compliance_gradient`.
    pub compliance_gradient: Vec<f64>,
    pub exact_compliance_gradient: Vec<f64>,
    /// `volume_gradients[i]` is the gradient of `volumes[i]`.
    pub volume_gradients: Vec<Vec<f64>>,
    pub displacement: Vec<f64>,
}

enum Regularization {
    Sensitivity(SensitivityFilter),
    Pde(HelmholtzFilter),
}

/// Owns the finite element model and filter operator of one problem.
pub struct Evaluator {
    model: FeModel,
    config: OptimizationConfig,
    regularization: Regularization,
}

impl Evaluator {
    pub fn new(spec: &ProblemSpec, config: OptimizationConfig) -> Result<Self> {
        config.validate()?;
        let model = build_problem(spec)?;
        let regularization = match config.filter {
            FilterConfig::Sensitivity { radius } => {
                Regularization::Sensitivity(SensitivityFilter::new(model.grid(), radius)?)
            }
            FilterConfig::Pde { length } => Regularization::Pde(HelmholtzFilter::new(model.grid(), length)?),
        };
        Ok(Self {
            model,
            config,
            regularization,
        })
    }

    pub fn model(&self) -> &FeModel {
        &self.model
    }

    pub fn config(&self) -> &OptimizationConfig {
        &self.config
    }

    pub fn element_count(&self) -> usize {
        self.model.grid().element_count()
    }

    pub fn variable_count(&self) -> usize {
        self.element_count() * self.config.materials.count()
    }

    /// Forward filter and projection of a raw design.
    pub fn design(&self, raw: &[f64], beta: Option<f64>) -> Result<DesignField> {
        let (m, ne) = (self.config.materials.count(), self.element_count());
        Error::check_len("raw design", m * ne, raw.len())?;
        let (filtered, physical) = match &self.regularization {
            Regularization::Sensitivity(_) => (raw.to_vec(), raw.to_vec()),
            Regularization::Pde(filter) => {
                let beta = beta.ok_or_else(|| {
                    Error::InvalidFilter("the PDE filter needs a projection sharpness".into())
                })?;
                let mut filtered = Vec::with_capacity(m * ne);
                for chunk in raw.chunks(ne) {
                    // the filter is an average, clamping only removes round-off
                    filtered.extend(filter.apply(chunk)?.into_iter().map(|v| v.clamp(0.0, 1.0)));
                }
                let physical = filtered.iter().map(|&v| project(v, beta)).collect();
                (filtered, physical)
            }
        };
        Ok(DesignField {
            materials: m,
            elements: ne,
            raw: raw.to_vec(),
            filtered,
            physical,
        })
    }

    /// Interpolated modulus of every element.
    pub fn element_moduli(&self, design: &DesignField) -> Vec<f64> {
        let m = design.materials;
        let mut grad = vec![0.0; m];
        (0..design.elements)
            .map(|e| {
                modulus_and_gradient(&design.element_physical(e), &self.config.materials, self.config.scheme, &mut grad)
            })
            .collect()
    }

    pub fn evaluate(&self, design: &DesignField, beta: Option<f64>) -> Result<Evaluation> {
        let (m, ne) = (design.materials, design.elements);
        let set = &self.config.materials;
        let scheme = self.config.scheme;
        let mut moduli = Vec::with_capacity(ne);
        let mut dmod = vec![0.0; m * ne];
        let mut grad = vec![0.0; m];
        let mut volumes = vec![0.0; m];
        let mut dvol = vec![vec![0.0; m * ne]; m];
        let mut jac = vec![0.0; m * m];
        let inv_ne = 1.0 / ne as f64;
        for e in 0..ne {
            let gamma = design.element_physical(e);
            moduli.push(modulus_and_gradient(&gamma, set, scheme, &mut grad));
            for i in 0..m {
                dmod[i * ne + e] = grad[i];
            }
            let occ = occupancy(&gamma, scheme);
            occupancy_jacobian(&gamma, scheme, &mut jac);
            for i in 0..m {
                volumes[i] += occ[i] * inv_ne;
                for k in 0..m {
                    dvol[i][k * ne + e] = jac[i * m + k] * inv_ne;
                }
            }
        }

        let solution = self.model.solve(&moduli)?;
        let u = solution.displacement;
        let force = self.model.force_vector();
        let compliance: f64 = force.iter().zip(&u).map(|(f, u)| f * u).sum();
        let energies = self.model.element_energies(&u);
        let mut dc: Vec<f64> = (0..m * ne).map(|k| -dmod[k] * energies[k % ne]).collect();

        let compliance_gradient;
        match &self.regularization {
            Regularization::Sensitivity(filter) => {
                let mut filtered = Vec::with_capacity(m * ne);
                for chunk in dc.chunks(ne) {
                    filtered.extend(filter.apply(chunk)?);
                }
                compliance_gradient = filtered;
            }
            Regularization::Pde(filter) => {
                let beta = beta.ok_or_else(|| {
                    Error::InvalidFilter("the PDE filter needs a projection sharpness".into())
                })?;
                let slope: Vec<f64> = design
                    .filtered
                    .iter()
                    .map(|&v| projection_derivative(v, beta))
                    .collect();
                let pull = |g: &mut Vec<f64>| -> Result<()> {
                    let mut out = Vec::with_capacity(m * ne);
                    for (i, chunk) in g.chunks(ne).enumerate() {
                        let scaled: Vec<f64> = chunk
                            .iter()
                            .zip(&slope[i * ne..(i + 1) * ne])
                            .map(|(a, b)| a * b)
                            .collect();
                        out.extend(filter.chain(&scaled)?);
                    }
                    *g = out;
                    Ok(())
                };
                pull(&mut dc)?;
                for g in dvol.iter_mut() {
                    pull(g)?;
                }
                compliance_gradient = dc.clone();
            }
        }
        Ok(Evaluation {
            compliance,
            volumes,
            compliance_gradient,
            exact_compliance_gradient: dc,
            volume_gradients: dvol,
            displacement: u,
        })
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub compliance: f64,
    pub volumes: Vec<f64>,
    pub grayness: Vec<f64>,
    /// Largest raw-variable change of the step that produced this design
    /// (1 for the initial design).
    pub change: f64,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationHistory {
    pub records: Vec<IterationRecord>,
}

impl OptimizationHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationLimit,
}

/// Stepwise optimization run. On an error the last good design and history
/// stay available.
pub struct Optimization {
    evaluator: Evaluator,
    mma: MmaState,
    x: Vec<f64>,
    change: f64,
    design: DesignField,
    history: OptimizationHistory,
    stop: Option<StopReason>,
}

impl Optimization {
    pub fn new(spec: &ProblemSpec, config: OptimizationConfig) -> Result<Self> {
        let evaluator = Evaluator::new(spec, config)?;
        let n = evaluator.variable_count();
        let x = vec![INITIAL_DESIGN; n];
        let mma = MmaState::new(&x, vec![0.0; n], vec![1.0; n], evaluator.config.mma)?;
        let design = evaluator.design(&x, evaluator.config.beta(1))?;
        Ok(Self {
            evaluator,
            mma,
            x,
            change: 1.0,
            design,
            history: OptimizationHistory::default(),
            stop: None,
        })
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// Design of the most recent evaluated iterate.
    pub fn design(&self) -> &DesignField {
        &self.design
    }

    pub fn history(&self) -> &OptimizationHistory {
        &self.history
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    /// Evaluate the current iterate, record it and, unless the run is over,
    /// take one MMA step. Returns `None` once stopped.
    pub fn iterate(&mut self) -> Result<Option<&IterationRecord>> {
        if self.stop.is_some() {
            return Ok(None);
        }
        let it = self.history.len() + 1;
        let fail = |e: Error| Error::RunAborted {
            iteration: it - 1,
            source: Box::new(e),
        };
        let cfg = &self.evaluator.config;
        let beta = cfg.beta(it);
        if it > 1 && beta != cfg.beta(it - 1) {
            self.mma.invalidate_prediction();
        }
        let design = self.evaluator.design(&self.x, beta).map_err(fail)?;
        let eval = self.evaluator.evaluate(&design, beta).map_err(fail)?;
        let scheme = cfg.scheme;
        let record = IterationRecord {
            iteration: it,
            compliance: eval.compliance,
            volumes: eval.volumes.clone(),
            grayness: grayness(&design, scheme),
            change: self.change,
            beta,
        };
        let feasible = eval
            .volumes
            .iter()
            .zip(&cfg.volume_fractions)
            .all(|(v, v0)| *v <= v0 + VOLUME_TOLERANCE);
        let settled = beta.is_none_or(|b| b >= cfg.projection.beta_max);
        let converged = it > 1 && self.change < cfg.change_tolerance && feasible && settled;

        if converged {
            self.stop = Some(StopReason::Converged);
        } else if it >= cfg.max_iterations {
            self.stop = Some(StopReason::IterationLimit);
        } else {
            let constraints = ConstraintSet {
                values: eval
                    .volumes
                    .iter()
                    .zip(&cfg.volume_fractions)
                    .map(|(v, v0)| v / v0 - 1.0)
                    .collect(),
                gradients: eval
                    .volume_gradients
                    .iter()
                    .zip(&cfg.volume_fractions)
                    .map(|(g, v0)| g.iter().map(|d| d / v0).collect())
                    .collect(),
            };
            let step = self
                .mma
                .step(&self.x, eval.compliance, &eval.compliance_gradient, &constraints)
                .map_err(fail)?;
            self.change = step
                .x
                .iter()
                .zip(&self.x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            self.x = step.x;
        }
        self.design = design;
        self.history.records.push(record);
        Ok(self.history.last())
    }

    /// Iterate until a stop criterion fires.
    pub fn run(&mut self) -> Result<StopReason> {
        while self.iterate()?.is_some() {}
        Ok(self.stop.expect("loop ends only when stopped"))
    }
}

pub struct RunOutcome {
    pub design: DesignField,
    pub history: OptimizationHistory,
    pub stop: StopReason,
}

/// Full run from the uniform initial design.
pub fn run_optimization(spec: &ProblemSpec, config: OptimizationConfig) -> Result<RunOutcome> {
    run_optimization_with(spec, config, |_| {})
}

/// As [`run_optimization`], calling `observer` after every iteration.
pub fn run_optimization_with(
    spec: &ProblemSpec,
    config: OptimizationConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<RunOutcome> {
    let mut opt = Optimization::new(spec, config)?;
    while let Some(record) = opt.iterate()? {
        observer(record);
    }
    Ok(RunOutcome {
        stop: opt.stop.expect("loop ends only when stopped"),
        design: opt.design,
        history: opt.history,
    })
}

/// Largest componentwise mismatch between analytic gradients and central
/// differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub compliance_error: f64,
    pub volume_error: f64,
    pub checked: usize,
}

impl GradientCheck {
    pub fn max_error(&self) -> f64 {
        self.compliance_error.max(self.volume_error)
    }
}

/// Central-difference check of the exact compliance and volume gradients
/// at `raw`. Errors are relative to `max(|analytic|, 1e-3 max|analytic|)`
/// so vanishing components do not divide by zero.
pub fn gradient_check(
    evaluator: &Evaluator,
    raw: &[f64],
    beta: Option<f64>,
    step: f64,
) -> Result<GradientCheck> {
    let design = evaluator.design(raw, beta)?;
    let base = evaluator.evaluate(&design, beta)?;
    let m = base.volumes.len();
    let floor = |g: &[f64]| 1e-3 * g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let c_floor = floor(&base.exact_compliance_gradient);
    let v_floor: Vec<f64> = base.volume_gradients.iter().map(|g| floor(g)).collect();
    let mut compliance_error = 0.0f64;
    let mut volume_error = 0.0f64;
    let mut x = raw.to_vec();
    for j in 0..raw.len() {
        x[j] = raw[j] + step;
        let plus = evaluator.evaluate(&evaluator.design(&x, beta)?, beta)?;
        x[j] = raw[j] - step;
        let minus = evaluator.evaluate(&evaluator.design(&x, beta)?, beta)?;
        x[j] = raw[j];
        let fd = (plus.compliance - minus.compliance) / (2.0 * step);
        let an = base.exact_compliance_gradient[j];
        compliance_error = compliance_error.max((fd - an).abs() / an.abs().max(c_floor));
        for i in 0..m {
            let fd = (plus.volumes[i] - minus.volumes[i]) / (2.0 * step);
            let an = base.volume_gradients[i][j];
            if v_floor[i] > 0.0 {
                volume_error = volume_error.max((fd - an).abs() / an.abs().max(v_floor[i]));
            }
        }
    }
    Ok(GradientCheck {
        compliance_error,
        volume_error,
        checked: raw.len(),
    })
}

/// Acceptance bound for [`gradient_suite`].
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// One scheme and filter combination of [`gradient_suite`].
#[derive(Clone, Debug)]
pub struct GradientCase {
    pub scheme: Scheme,
    pub filter: &'static str,
    pub materials: usize,
    pub check: GradientCheck,
}

impl GradientCase {
    pub fn passed(&self) -> bool {
        self.check.max_error() < GRADIENT_TOLERANCE
    }
}

/// Central-difference check of every scheme under both filters on a 6 x 3
/// cantilever with two and three materials, at random designs drawn from
/// `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCase>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let spec = ProblemSpec {
        geometry: crate::problem::Geometry::Cantilever,
        width: 6.0,
        height: 3.0,
        nelx: 6,
        nely: 3,
        load: 1.0,
        poisson: 0.3,
    };
    let filters = [
        FilterConfig::Sensitivity { radius: 1.5 },
        FilterConfig::Pde {
            length: crate::filtering::helmholtz_length_from_radius(2.0),
        },
    ];
    let beta = 4.0;
    let mut cases = Vec::new();
    for moduli in [vec![1.0, 5.0], vec![1.0, 2.0, 5.0]] {
        let m = moduli.len();
        let set = MaterialSet::new(moduli, 1e-9)?;
        for scheme in Scheme::ALL {
            for filter in filters {
                let cfg = OptimizationConfig::new(set.clone(), scheme, filter, vec![0.9 / m as f64; m]);
                let evaluator = Evaluator::new(&spec, cfg)?;
                let raw: Vec<f64> = (0..evaluator.variable_count())
                    .map(|_| rng.random_range(0.1..0.9))
                    .collect();
                let beta = matches!(filter, FilterConfig::Pde { .. }).then_some(beta);
                cases.push(GradientCase {
                    scheme,
                    filter: filter.kind(),
                    materials: m,
                    check: gradient_check(&evaluator, &raw, beta, 1e-6)?,
                });
            }
        }
    }
    Ok(cases)
}
