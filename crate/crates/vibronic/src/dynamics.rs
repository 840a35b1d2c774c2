//! Lindblad master-equation propagation.
//!
//! The open-system propagator integrates ρ̇ = −iκ[H,ρ] + Σ_ν Γ_ν D[O_ν]ρ with
//! an adaptive Dormand–Prince 5(4) pair. The generator is assembled once as a
//! sparse CSR matrix acting on the row-major flattening of ρ in the local
//! exciton-product basis, where H and all jump operators are very sparse;
//! states are rotated to the system eigenbasis only at recording time.
//! Closed-system evolution uses the exact eigenbasis phases
//! ρ_jk(t) = ρ_jk(0)·e^{iκΩ_kj t}.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    build_operators, BasisTag, DimerParams, EigenSystem, Operator, OperatorSet,
};
use crate::scalar::{kappa, Scalar};
use crate::sparse::{Coo, Csr};

/// System state at one instant, tagged with its basis and time.
#[derive(Debug, Clone)]
pub struct DensityMatrix<R: Scalar> {
    pub matrix: Array2<Complex<R>>,
    pub basis: BasisTag,
    /// Simulation time in ps.
    pub time: R,
}

impl<R: Scalar> DensityMatrix<R> {
    pub fn new(matrix: Array2<Complex<R>>, basis: BasisTag, time: R) -> Self {
        Self { matrix, basis, time }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex<R> {
        self.matrix.diag().iter().copied().sum()
    }

    pub fn herm_deviation(&self) -> R {
        Operator::new(self.matrix.clone(), self.basis).herm_deviation()
    }

    /// Smallest eigenvalue of the Hermitised matrix (positivity audit).
    pub fn min_eigenvalue(&self) -> Result<R> {
        let herm = (&self.matrix + &self.matrix.t().mapv(|z| z.conj()))
            .mapv(|z| z * Complex::new(R::of(0.5), R::zero()));
        let vals = R::eigvalsh(&herm)?;
        Ok(vals.iter().copied().fold(R::infinity(), R::min))
    }

    /// Purity Tr ρ².
    pub fn purity(&self) -> R {
        let mut acc = R::zero();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.matrix[[i, j]] * self.matrix[[j, i]]).re;
            }
        }
        acc
    }

    /// Enforce the DensityMatrix invariants: Hermitian to 1e-10, unit trace
    /// to 1e-8, smallest eigenvalue ≥ −1e-7.
    pub fn validate(&self) -> Result<()> {
        let herm = self.herm_deviation();
        if herm > R::of(1e-10) {
            return Err(Error::InvariantViolation(format!(
                "density matrix not Hermitian: max-norm asymmetry {herm:e}"
            )));
        }
        let tr_dev = (self.trace() - Complex::new(R::one(), R::zero())).norm();
        if tr_dev > R::of(1e-8) {
            return Err(Error::InvariantViolation(format!("trace deviates from 1 by {tr_dev:e}")));
        }
        let min_eig = self.min_eigenvalue()?;
        if min_eig < R::of(-1e-7) {
            return Err(Error::InvariantViolation(format!(
                "density matrix not positive: min eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }
}

/// One Lindblad channel: jump operator and rate.
#[derive(Debug, Clone)]
pub struct DissipatorSpec<R: Scalar> {
    pub operator: Operator<R>,
    /// Γ_ν in ps⁻¹.
    pub rate: R,
}

/// Integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Method {
    /// Adaptive embedded Dormand–Prince 5(4) on the density matrix.
    #[default]
    #[serde(rename = "adaptive-rk")]
    AdaptiveRk,
    /// Dense-superoperator eigendecomposition exponential (small systems).
    #[serde(rename = "eigen-exponential")]
    EigenExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig<R> {
    /// End time in ps.
    pub t_end: R,
    /// Output grid spacing in ps.
    pub dt_out: R,
    pub rel_tol: R,
    pub abs_tol: R,
    pub method: Method,
    /// Keep at most this many full eigenbasis states (thinned uniformly).
    pub max_stored_states: usize,
}

impl<R: Scalar> Default for PropagationConfig<R> {
    fn default() -> Self {
        Self {
            t_end: R::of(2.0),
            dt_out: R::of(0.001),
            rel_tol: R::of(1e-8),
            abs_tol: R::of(1e-10),
            method: Method::AdaptiveRk,
            max_stored_states: 128,
        }
    }
}

impl<R: Scalar> PropagationConfig<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > R::zero()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.dt_out > R::zero()) {
            return Err(Error::Config(format!("dt_out must be positive, got {}", self.dt_out)));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > R::zero() && tol <= R::of(1e-2)) {
                return Err(Error::Config(format!("{name} must lie in (0, 1e-2], got {tol}")));
            }
        }
        if self.max_stored_states == 0 {
            return Err(Error::Config("max_stored_states must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of output intervals (grid has n_steps + 1 points).
    pub fn n_out(&self) -> usize {
        (self.t_end / self.dt_out).round().to_f64_lossy() as usize
    }
}

/// Mean thermal occupation B = (e^{ω/k_BT} − 1)⁻¹.
pub fn thermal_occupation<R: Scalar>(omega: R, kbt: R) -> R {
    R::one() / ((omega / kbt).exp() - R::one())
}

/// Truncated single-mode thermal state, renormalised to unit trace.
pub fn thermal_mode_state<R: Scalar>(omega: R, kbt: R, m_levels: usize) -> Array2<Complex<R>> {
    let f = m_levels + 1;
    let mut diag = Vec::with_capacity(f);
    let mut norm = R::zero();
    for n in 0..f {
        let p = (-R::of(n as f64) * omega / kbt).exp();
        norm += p;
        diag.push(p);
    }
    let mut rho = Array2::zeros((f, f));
    for (n, p) in diag.into_iter().enumerate() {
        rho[[n, n]] = Complex::new(p / norm, R::zero());
    }
    rho
}

/// Initial condition ρ(0) = |E2⟩⟨E2| ⊗ ρ1_th ⊗ ρ2_th in the local basis.
pub fn initial_state<R: Scalar>(params: &DimerParams<R>) -> Result<DensityMatrix<R>> {
    params.validate()?;
    let mut el = Array2::zeros((2, 2));
    el[[1, 1]] = Complex::new(R::one(), R::zero());
    let th1 = thermal_mode_state(params.omega1, params.kbt, params.m_levels);
    let th2 = thermal_mode_state(params.omega2, params.kbt, params.m_levels);
    let rho = ndarray::linalg::kron(&el, &ndarray::linalg::kron(&th1, &th2));
    Ok(DensityMatrix::new(rho, BasisTag::LocalExcitonProduct, R::zero()))
}

/// The six standard channels: electronic pure dephasing through the rotated
/// site projectors and thermal relaxation/excitation of each mode. Channels
/// with zero rate are dropped.
pub fn standard_dissipators<R: Scalar>(params: &DimerParams<R>) -> Result<Vec<DissipatorSpec<R>>> {
    let ops = build_operators(params)?;
    standard_dissipators_with(params, &ops)
}

/// Same as [`standard_dissipators`] but reusing an operator set.
pub fn standard_dissipators_with<R: Scalar>(
    params: &DimerParams<R>,
    ops: &OperatorSet<R>,
) -> Result<Vec<DissipatorSpec<R>>> {
    let b1 = thermal_occupation(params.omega1, params.kbt);
    let b2 = thermal_occupation(params.omega2, params.kbt);
    let channels = [
        (&ops.theta1, params.gamma_deph),
        (&ops.theta2, params.gamma_deph),
        (&ops.b1, params.gamma_th * (R::one() + b1)),
        (&ops.b2, params.gamma_th * (R::one() + b2)),
        (&ops.b1_dag, params.gamma_th * b1),
        (&ops.b2_dag, params.gamma_th * b2),
    ];
    Ok(channels
        .into_iter()
        .filter(|(_, rate)| *rate > R::zero())
        .map(|(op, rate)| DissipatorSpec { operator: op.clone(), rate })
        .collect())
}

/// Dense reference evaluation of the master-equation right-hand side,
/// −iκ[H,ρ] + Σ_ν Γ_ν(O_ν ρ O_ν† − ½{O_ν†O_ν, ρ}), in ps⁻¹.
pub fn lindblad_rhs<R: Scalar>(
    rho: &DensityMatrix<R>,
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
) -> Result<Array2<Complex<R>>> {
    h.check_basis(rho.basis)?;
    let k = Complex::new(R::zero(), -kappa::<R>());
    let mut out = (h.matrix.dot(&rho.matrix) - rho.matrix.dot(&h.matrix)).mapv(|z| z * k);
    let half = Complex::new(R::of(0.5), R::zero());
    for d in dissipators {
        d.operator.check_basis(rho.basis)?;
        let od = d.operator.dagger();
        let jump = d.operator.matrix.dot(&rho.matrix).dot(&od.matrix);
        let oo = od.matrix.dot(&d.operator.matrix);
        let anti = (oo.dot(&rho.matrix) + rho.matrix.dot(&oo)).mapv(|z| z * half);
        out = out + (jump - anti).mapv(|z| z * Complex::new(d.rate, R::zero()));
    }
    Ok(out)
}

/// Dense vectorised generator acting on the row-major flattening of ρ:
/// L = −iκ(H⊗I − I⊗Hᵀ) + Σ Γ[O⊗O* − ½(O†O)⊗I − ½ I⊗(O†O)ᵀ].
pub fn dense_generator<R: Scalar>(
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
) -> Result<Array2<Complex<R>>> {
    let coo = generator_coo(h, dissipators)?;
    let d2 = h.dim() * h.dim();
    let mut out = Array2::zeros((d2, d2));
    for &(i, j, v) in &coo.triplets {
        out[[i as usize, j as usize]] += v;
    }
    Ok(out)
}

fn generator_coo<R: Scalar>(
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
) -> Result<Coo<R>> {
    let dim = h.dim();
    let eye = Coo::identity(dim);
    let hs = Coo::from_dense(&h.matrix);
    let mik = Complex::new(R::zero(), -kappa::<R>());
    let mut gen = Coo::new(dim * dim, dim * dim);
    gen.extend_from(hs.kron(&eye).scaled(mik));
    gen.extend_from(eye.kron(&hs.transpose()).scaled(-mik));
    let mhalf = Complex::new(R::of(-0.5), R::zero());
    for d in dissipators {
        d.operator.check_basis(h.basis)?;
        let rate = Complex::new(d.rate, R::zero());
        let o = Coo::from_dense(&d.operator.matrix);
        let oo = o.dagger().matmul(&o);
        gen.extend_from(o.kron(&o.conj()).scaled(rate));
        gen.extend_from(oo.kron(&eye).scaled(rate * mhalf));
        gen.extend_from(eye.kron(&oo.transpose()).scaled(rate * mhalf));
    }
    Ok(gen)
}

/// What to record along a trajectory.
#[derive(Clone)]
pub struct RecordPlan<R: Scalar> {
    /// Named local-basis operators traced against ρ(t) on the full grid.
    pub series_ops: Vec<(String, Operator<R>)>,
    /// Eigenbasis coherence elements ρ_jk(t) recorded on the full grid.
    pub pairs: Vec<(usize, usize)>,
    /// Eigensystem used for pair elements and stored eigenbasis states.
    pub eig: Option<EigenSystem<R>>,
}

impl<R: Scalar> RecordPlan<R> {
    pub fn empty() -> Self {
        Self { series_ops: Vec::new(), pairs: Vec::new(), eig: None }
    }

    /// The standard set: X1, X2, popE1, popE2, n1, n2 plus the given pairs.
    pub fn standard(ops: &OperatorSet<R>, eig: EigenSystem<R>, pairs: Vec<(usize, usize)>) -> Self {
        let n1 = Operator::new(ops.b1_dag.matrix.dot(&ops.b1.matrix), ops.b1.basis);
        let n2 = Operator::new(ops.b2_dag.matrix.dot(&ops.b2.matrix), ops.b2.basis);
        Self {
            series_ops: vec![
                ("X1".into(), ops.x1.clone()),
                ("X2".into(), ops.x2.clone()),
                ("popE1".into(), ops.pop_e1.clone()),
                ("popE2".into(), ops.pop_e2.clone()),
                ("n1".into(), n1),
                ("n2".into(), n2),
            ],
            pairs,
            eig: Some(eig),
        }
    }
}

/// Full eigenbasis state kept at a thinned grid index.
#[derive(Debug, Clone)]
pub struct StoredState<R: Scalar> {
    /// Index into `Trajectory::times`.
    pub grid_index: usize,
    pub state: DensityMatrix<R>,
}

/// Numerical health summary accumulated during propagation.
#[derive(Debug, Clone, Serialize, Default)]
pub struct TrajectoryAudit {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// max |Tr ρ − 1| over the output grid.
    pub max_trace_dev: f64,
    /// max Hermiticity deviation over stored states.
    pub max_herm_dev: f64,
    /// min eigenvalue over stored states.
    pub min_eigenvalue: f64,
    /// max |Im Tr{O ρ}| over all recorded series.
    pub max_series_imag: f64,
    pub warnings: Vec<String>,
}

/// Time-gridded results of one propagation.
#[derive(Debug, Clone)]
pub struct Trajectory<R: Scalar> {
    /// Uniform output grid in ps.
    pub times: Vec<R>,
    /// Named real observable series on the full grid.
    pub series: BTreeMap<String, Vec<R>>,
    /// Eigenbasis elements ρ_jk(t) on the full grid, keyed by (j, k).
    pub elements: BTreeMap<(usize, usize), Vec<Complex<R>>>,
    /// Thinned full states in the eigenbasis (local basis if no eigensystem
    /// was supplied in the record plan).
    pub stored: Vec<StoredState<R>>,
    pub audit: TrajectoryAudit,
}

impl<R: Scalar> Trajectory<R> {
    pub fn series(&self, name: &str) -> Option<&[R]> {
        self.series.get(name).map(|v| v.as_slice())
    }

    /// CSV with `t_ps`, the named series, and per-pair re/im/abs columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t_ps")?;
        for name in self.series.keys() {
            write!(w, ",{name}")?;
        }
        for (j, k) in self.elements.keys() {
            write!(w, ",coh_{j}_{k}_re,coh_{j}_{k}_im,coh_{j}_{k}_abs")?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{:.6}", t.to_f64_lossy())?;
            for col in self.series.values() {
                write!(w, ",{:.9e}", col[i].to_f64_lossy())?;
            }
            for col in self.elements.values() {
                let z = col[i];
                write!(
                    w,
                    ",{:.9e},{:.9e},{:.9e}",
                    z.re.to_f64_lossy(),
                    z.im.to_f64_lossy(),
                    z.norm().to_f64_lossy()
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Exact closed-system evolution on the output grid:
/// ρ_jk(t) = ρ_jk(0)·e^{iκΩ_kj t} in the eigenbasis.
pub fn propagate_closed<R: Scalar>(
    rho0: &DensityMatrix<R>,
    eig: &EigenSystem<R>,
    config: &PropagationConfig<R>,
    plan: &RecordPlan<R>,
) -> Result<Trajectory<R>> {
    config.validate()?;
    let dim = rho0.dim();
    if dim != eig.dim() {
        return Err(Error::InvariantViolation(format!(
            "state dimension {dim} does not match eigensystem dimension {}",
            eig.dim()
        )));
    }
    let rho_eig = match rho0.basis {
        BasisTag::SystemEigen => rho0.matrix.clone(),
        BasisTag::LocalExcitonProduct => {
            let vd = eig.vectors.t().mapv(|z| z.conj());
            vd.dot(&rho0.matrix).dot(&eig.vectors)
        }
    };
    // Rotate the series operators into the eigenbasis once.
    let mut eig_ops = Vec::with_capacity(plan.series_ops.len());
    for (name, op) in &plan.series_ops {
        eig_ops.push((name.clone(), eig.to_eigenbasis(op)?));
    }
    for &(j, k) in &plan.pairs {
        if j >= dim || k >= dim {
            return Err(Error::IndexOutOfRange { j, k, dim });
        }
    }

    let n_out = config.n_out();
    let store_stride = (n_out / config.max_stored_states).max(1);
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_out + 1),
        series: plan.series_ops.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
        elements: plan.pairs.iter().map(|&p| (p, Vec::new())).collect(),
        stored: Vec::new(),
        audit: TrajectoryAudit::default(),
    };

    let kap = kappa::<R>();
    let mut rho_t = rho_eig.clone();
    for step in 0..=n_out {
        let t = config.dt_out * R::of(step as f64);
        for j in 0..dim {
            for k in 0..dim {
                let phase = kap * eig.gap(j, k) * t;
                rho_t[[j, k]] =
                    rho_eig[[j, k]] * Complex::new(phase.cos(), phase.sin());
            }
        }
        traj.times.push(t);
        for (name, op) in &eig_ops {
            let z = trace_product(&op.matrix.view(), &rho_t.view());
            let im = z.im.abs().to_f64_lossy();
            if im > traj.audit.max_series_imag {
                traj.audit.max_series_imag = im;
            }
            traj.series.get_mut(name).unwrap().push(z.re);
        }
        for (&(j, k), col) in traj.elements.iter_mut() {
            col.push(rho_t[[j, k]]);
        }
        if step % store_stride == 0 || step == n_out {
            let state = DensityMatrix::new(rho_t.clone(), BasisTag::SystemEigen, t);
            audit_state(&state, &mut traj.audit)?;
            traj.stored.push(StoredState { grid_index: step, state });
        }
    }
    Ok(traj)
}

/// Integrate the Lindblad equation on the output grid.
pub fn propagate_open<R: Scalar>(
    rho0: &DensityMatrix<R>,
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
    config: &PropagationConfig<R>,
    plan: &RecordPlan<R>,
) -> Result<Trajectory<R>> {
    config.validate()?;
    h.check_basis(rho0.basis)?;
    match config.method {
        Method::AdaptiveRk => propagate_open_rk(rho0, h, dissipators, config, plan),
        Method::EigenExponential => propagate_open_expm(rho0, h, dissipators, config, plan),
    }
}

fn propagate_open_rk<R: Scalar>(
    rho0: &DensityMatrix<R>,
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
    config: &PropagationConfig<R>,
    plan: &RecordPlan<R>,
) -> Result<Trajectory<R>> {
    let dim = rho0.dim();
    let gen = Csr::from_coo(&generator_coo(h, dissipators)?);
    let mut recorder = Recorder::new(dim, config, plan)?;

    // Dormand–Prince 5(4) tableau.
    let a: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // b − b̂: weights of the embedded error estimate (k7 = FSAL stage).
    let e: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let n = dim * dim;
    let mut y: Vec<Complex<R>> = rho0.matrix.iter().copied().collect();
    let mut k: Vec<Vec<Complex<R>>> = (0..7).map(|_| vec![Complex::<R>::default(); n]).collect();
    let mut y_stage = vec![Complex::<R>::default(); n];
    let mut y_new = vec![Complex::<R>::default(); n];

    let n_out = config.n_out();
    // Never step over a tenth of the fastest coherent period (~0.030 ps).
    let h_max = R::of(0.003).min(config.dt_out);
    let mut h_step = R::of(1e-5).min(h_max);
    let mut t = R::zero();
    let mut fsal_valid = false;

    recorder.record(0, R::zero(), &y)?;
    for out_step in 1..=n_out {
        let t_target = config.dt_out * R::of(out_step as f64);
        while t < t_target - R::of(1e-14) {
            let h_try = h_step.min(t_target - t);
            if h_try < R::of(1e-14) * t.max(R::one()) {
                return Err(Error::StepSizeUnderflow {
                    t: t.to_f64_lossy(),
                    h: h_try.to_f64_lossy(),
                });
            }
            if !fsal_valid {
                gen.matvec(&y, &mut k[0]);
            }
            for stage in 0..6 {
                let coefs = a[stage];
                for i in 0..n {
                    let mut acc = Complex::<R>::default();
                    for (j, &c) in coefs.iter().enumerate() {
                        if c != 0.0 {
                            acc += k[j][i] * Complex::new(R::of(c), R::zero());
                        }
                    }
                    y_stage[i] = y[i] + acc * Complex::new(h_try, R::zero());
                }
                if stage == 5 {
                    y_new.copy_from_slice(&y_stage);
                }
                let (head, tail) = k.split_at_mut(stage + 1);
                let _ = head;
                gen.matvec(&y_stage, &mut tail[0]);
            }

            // weighted RMS error over the embedded difference
            let mut err_sq = R::zero();
            for i in 0..n {
                let mut ei = Complex::<R>::default();
                for (j, &c) in e.iter().enumerate() {
                    if c != 0.0 {
                        ei += k[j][i] * Complex::new(R::of(c), R::zero());
                    }
                }
                let scale = config.abs_tol
                    + config.rel_tol * y[i].norm().max(y_new[i].norm());
                let r = ei.norm() * h_try / scale;
                err_sq += r * r;
            }
            let err = (err_sq / R::of(n as f64)).sqrt();

            let factor = if err > R::zero() {
                R::of(0.9) * err.powf(R::of(-0.2))
            } else {
                R::of(5.0)
            };
            let factor = factor.max(R::of(0.2)).min(R::of(5.0));
            if err <= R::one() {
                t += h_try;
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6); // FSAL: last stage derivative becomes k1
                fsal_valid = true;
                recorder.audit.steps_accepted += 1;
            } else {
                recorder.audit.steps_rejected += 1;
                fsal_valid = true; // k1 still matches y
            }
            h_step = (h_try * factor).min(h_max);
        }
        t = t_target;
        recorder.record(out_step, t, &y)?;
    }
    Ok(recorder.finish())
}

/// Small-system reference propagation: vec ρ(t) = V e^{Λt} V⁻¹ vec ρ(0).
fn propagate_open_expm<R: Scalar>(
    rho0: &DensityMatrix<R>,
    h: &Operator<R>,
    dissipators: &[DissipatorSpec<R>],
    config: &PropagationConfig<R>,
    plan: &RecordPlan<R>,
) -> Result<Trajectory<R>> {
    let dim = rho0.dim();
    const EXPM_MAX_DIM: usize = 64;
    if dim > EXPM_MAX_DIM {
        return Err(Error::MemoryBudget { dim, max: EXPM_MAX_DIM });
    }
    let gen = dense_generator(h, dissipators)?;
    let (lambda, v) = R::eig(&gen)?;
    let vinv = R::inv(&v)?;
    let y0: Vec<Complex<R>> = rho0.matrix.iter().copied().collect();
    let c0 = vinv.dot(&ndarray::Array1::from_vec(y0));

    let mut recorder = Recorder::new(dim, config, plan)?;
    let n_out = config.n_out();
    for out_step in 0..=n_out {
        let t = config.dt_out * R::of(out_step as f64);
        let ct =
            ndarray::Array1::from_iter(lambda.iter().zip(c0.iter()).map(|(l, c)| (*l * t.into_complex()).exp() * *c));
        let y = v.dot(&ct);
        recorder.record(out_step, t, y.as_slice().unwrap())?;
    }
    Ok(recorder.finish())
}

trait IntoComplex<R: Scalar> {
    fn into_complex(self) -> Complex<R>;
}

impl<R: Scalar> IntoComplex<R> for R {
    fn into_complex(self) -> Complex<R> {
        Complex::new(self, R::zero())
    }
}

/// Tr{A B} for dense square matrices.
pub(crate) fn trace_product<R: Scalar>(
    a: &ArrayView2<Complex<R>>,
    b: &ArrayView2<Complex<R>>,
) -> Complex<R> {
    let n = a.nrows();
    let mut acc = Complex::<R>::default();
    for i in 0..n {
        for j in 0..n {
            acc += a[[i, j]] * b[[j, i]];
        }
    }
    acc
}

fn audit_state<R: Scalar>(state: &DensityMatrix<R>, audit: &mut TrajectoryAudit) -> Result<()> {
    let herm = state.herm_deviation().to_f64_lossy();
    if herm > audit.max_herm_dev {
        audit.max_herm_dev = herm;
    }
    if herm > 1e-8 {
        audit.warnings.push(format!(
            "Hermiticity deviation {herm:e} at t = {} ps",
            state.time.to_f64_lossy()
        ));
    }
    let min_eig = state.min_eigenvalue()?.to_f64_lossy();
    if audit.min_eigenvalue == 0.0 || min_eig < audit.min_eigenvalue {
        audit.min_eigenvalue = min_eig;
    }
    if min_eig < -1e-6 {
        audit.warnings.push(format!(
            "positivity violation: min eigenvalue {min_eig:e} at t = {} ps",
            state.time.to_f64_lossy()
        ));
    }
    Ok(())
}

/// Accumulates series, pair elements and thinned snapshots during a run.
struct Recorder<'a, R: Scalar> {
    dim: usize,
    plan: &'a RecordPlan<R>,
    series_coo: Vec<(String, Vec<(u32, u32, Complex<R>)>)>,
    store_stride: usize,
    n_out: usize,
    traj: Trajectory<R>,
    audit: TrajectoryAudit,
}

impl<'a, R: Scalar> Recorder<'a, R> {
    fn new(dim: usize, config: &PropagationConfig<R>, plan: &'a RecordPlan<R>) -> Result<Self> {
        for (_, op) in &plan.series_ops {
            op.check_basis(BasisTag::LocalExcitonProduct)?;
        }
        if !plan.pairs.is_empty() && plan.eig.is_none() {
            return Err(Error::Config("pair recording requires an eigensystem".into()));
        }
        if let Some(eig) = &plan.eig {
            for &(j, k) in &plan.pairs {
                if j >= eig.dim() || k >= eig.dim() {
                    return Err(Error::IndexOutOfRange { j, k, dim: eig.dim() });
                }
            }
        }
        let n_out = config.n_out();
        let series_coo = plan
            .series_ops
            .iter()
            .map(|(name, op)| (name.clone(), Coo::from_dense(&op.matrix).triplets))
            .collect();
        Ok(Self {
            dim,
            plan,
            series_coo,
            store_stride: (n_out / config.max_stored_states).max(1),
            n_out,
            traj: Trajectory {
                times: Vec::with_capacity(n_out + 1),
                series: plan.series_ops.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
                elements: plan.pairs.iter().map(|&p| (p, Vec::new())).collect(),
                stored: Vec::new(),
                audit: TrajectoryAudit::default(),
            },
            audit: TrajectoryAudit::default(),
        })
    }

    /// Record grid point `index` at time `t` from the flattened local-basis
    /// state. Errors if the trace has drifted beyond 1e-6.
    fn record(&mut self, index: usize, t: R, y: &[Complex<R>]) -> Result<()> {
        let dim = self.dim;
        let rho = ArrayView2::from_shape((dim, dim), y).expect("flattened state shape");

        let mut tr = Complex::<R>::default();
        for i in 0..dim {
            tr += rho[[i, i]];
        }
        let tr_dev = (tr - Complex::new(R::one(), R::zero())).norm().to_f64_lossy();
        if tr_dev > self.audit.max_trace_dev {
            self.audit.max_trace_dev = tr_dev;
        }
        if tr_dev > 1e-6 {
            return Err(Error::InvariantViolation(format!(
                "trace drifted by {tr_dev:e} at t = {} ps",
                t.to_f64_lossy()
            )));
        }

        self.traj.times.push(t);
        for (name, triplets) in &self.series_coo {
            // Tr{O ρ} = Σ O_ij ρ_ji over the non-zeros of O
            let mut z = Complex::<R>::default();
            for &(i, j, v) in triplets {
                z += v * rho[[j as usize, i as usize]];
            }
            let im = z.im.abs().to_f64_lossy();
            if im > self.audit.max_series_imag {
                self.audit.max_series_imag = im;
            }
            self.traj.series.get_mut(name.as_str()).unwrap().push(z.re);
        }
        if let Some(eig) = &self.plan.eig {
            for (&(j, k), col) in self.traj.elements.iter_mut() {
                // ρ̂_jk = v_j† ρ v_k
                let vj = eig.vectors.column(j);
                let vk = eig.vectors.column(k);
                let mut z = Complex::<R>::default();
                for i in 0..dim {
                    let mut row = Complex::<R>::default();
                    for l in 0..dim {
                        row += rho[[i, l]] * vk[l];
                    }
                    z += vj[i].conj() * row;
                }
                col.push(z);
            }
        }
        if index % self.store_stride == 0 || index == self.n_out {
            let state = match &self.plan.eig {
                Some(eig) => {
                    let vd = eig.vectors.t().mapv(|z| z.conj());
                    let m = vd.dot(&rho).dot(&eig.vectors);
                    DensityMatrix::new(m, BasisTag::SystemEigen, t)
                }
                None => DensityMatrix::new(rho.to_owned(), BasisTag::LocalExcitonProduct, t),
            };
            audit_state(&state, &mut self.audit)?;
            self.traj.stored.push(StoredState { grid_index: index, state });
        }
        Ok(())
    }

    fn finish(mut self) -> Trajectory<R> {
        self.traj.audit = self.audit;
        self.traj
    }
}
