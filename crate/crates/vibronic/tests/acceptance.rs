//! Acceptance suite: end-to-end checks of the published reference behaviour.
//!
//! Each criterion prints one `criterion N: PASS/FAIL` line with the measured
//! quantities before asserting, so a failing run still reports every number.
//! Expensive propagations are shared between criteria through `OnceLock`.

use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vibronic::dynamics::{
    initial_state, propagate_open, standard_dissipators_with, Method, PropagationConfig,
    RecordPlan, Trajectory,
};
use vibronic::hilbert::{
    build_hamiltonian, build_operators, diagonalise, et_amplitude_indicator, matrix_element_table,
    BasisLabel, PairElements,
};
use vibronic::liouville::{build_superoperator, eigenmode_analysis};
use vibronic::scenario::preset;
use vibronic::syncanalysis::{pearson_sync, real_ft, sync_onset_time, Spectrum, SyncSeries};

const PAIRS: [(usize, usize); 7] = [(0, 2), (0, 3), (1, 4), (1, 5), (3, 7), (3, 8), (1, 3)];

fn report(criterion: usize, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Runs the preset scenario and returns its trajectory and sync series.
fn run_preset(name: &str, t_end: f64, pairs: Vec<(usize, usize)>) -> (Trajectory<f64>, SyncSeries<f64>) {
    let mut config = preset(name).unwrap();
    config.propagation.t_end = t_end;
    config.propagation.dt_out = 0.001;
    let p = &config.params;
    let h = build_hamiltonian(p).unwrap();
    let eig = diagonalise(&h).unwrap();
    let ops = build_operators(p).unwrap();
    let diss = standard_dissipators_with(p, &ops).unwrap();
    let rho0 = initial_state(p).unwrap();
    let plan = RecordPlan::standard(&ops, eig, pairs);
    let traj = propagate_open(&rho0, &h, &diss, &config.propagation, &plan).unwrap();
    let sync = pearson_sync(
        &traj.times,
        &traj.series["X1"],
        &traj.series["X2"],
        config.effective_sync_window(),
        ("X1", "X2"),
    )
    .unwrap();
    (traj, sync)
}

struct Pe2 {
    sync: SyncSeries<f64>,
    runtime_s: f64,
}

fn pe545_2ps() -> &'static Pe2 {
    static CELL: OnceLock<Pe2> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let (_, sync) = run_preset("pe545", 2.0, Vec::new());
        Pe2 { sync, runtime_s: start.elapsed().as_secs_f64() }
    })
}

struct Pe5 {
    traj: Trajectory<f64>,
    elements: Vec<PairElements<f64>>,
}

fn pe545_5ps() -> &'static Pe5 {
    static CELL: OnceLock<Pe5> = OnceLock::new();
    CELL.get_or_init(|| {
        let (traj, _) = run_preset("pe545", 5.0, PAIRS.to_vec());
        let p = preset("pe545").unwrap().params;
        let h = build_hamiltonian(&p).unwrap();
        let eig = diagonalise(&h).unwrap();
        let ops = build_operators(&p).unwrap();
        let elements = matrix_element_table(&eig, &ops, &PAIRS).unwrap();
        Pe5 { traj, elements }
    })
}

/// Largest-|value| spectral component above 100 cm⁻¹ (skips the slow
/// relaxation baseline lobe near zero frequency).
fn dominant_fast_peak(s: &Spectrum<f64>) -> (f64, f64) {
    s.frequencies
        .iter()
        .zip(&s.values)
        .filter(|(f, _)| **f > 100.0)
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(f, v)| (*f, *v))
        .unwrap()
}

fn criterion_01_table2_regression() -> bool {
    let start = Instant::now();
    let omega_ref = [1111.0, 1125.0, 1102.6, 1111.0, 1111.0, 1119.2, 81.0];
    let x_ref = [0.707, 0.637, 0.767, 0.707, 0.707, 0.935, 0.174];
    let sx_ref = [0.000, 0.385, 0.340, 0.000, 0.000, 0.384, 0.196];
    let p00_ref = [0.161, 0.144, 0.131, 0.133, 0.032, 0.026, 0.351];
    let sign_ref = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];

    let p = preset("pe545").unwrap().params;
    let h = build_hamiltonian(&p).unwrap();
    let eig = diagonalise(&h).unwrap();
    let ops = build_operators(&p).unwrap();
    let rows = matrix_element_table(&eig, &ops, &PAIRS).unwrap();

    let mut worst = (0.0f64, String::new());
    let mut pass = true;
    for (i, row) in rows.iter().enumerate() {
        let checks = [
            ("omega", (row.omega_kj - omega_ref[i]).abs(), 0.5),
            ("X1", (row.x1.abs() - x_ref[i]).abs(), 0.005),
            ("X2", (row.x2.abs() - x_ref[i]).abs(), 0.005),
            ("sigma_x", (row.sigma_x.abs() - sx_ref[i]).abs(), 0.005),
            ("P00", (row.p00.abs() - p00_ref[i]).abs(), 0.005),
        ];
        for (name, dev, tol) in checks {
            pass = pass && dev <= tol;
            if dev / tol > worst.0 {
                worst = (dev / tol, format!("{name} of pair {:?} dev {dev:.4}", PAIRS[i]));
            }
        }
        pass = pass && (row.x1 * row.x2).signum() == sign_ref[i];
    }
    let runtime = start.elapsed().as_secs_f64();
    pass = pass && runtime < 5.0;
    report(
        1,
        pass,
        &format!("Table II regression: worst cell {} ({runtime:.2} s)", worst.1),
    )
}

fn criterion_02_eigenstate_compositions() -> bool {
    let p = preset("pe545").unwrap().params;
    let h = build_hamiltonian(&p).unwrap();
    let eig = diagonalise(&h).unwrap();
    let idx = |d: u8, n1: usize, n2: usize| {
        BasisLabel { exciton_index: d, n1, n2 }.flatten(p.m_levels)
    };
    let basis = [idx(1, 0, 1), idx(1, 1, 0), idx(2, 0, 0), idx(2, 0, 1)];
    let reference: [(usize, [f64; 4]); 2] =
        [(1, [0.3, 0.3, 0.9, 0.2]), (3, [0.6, 0.6, 0.4, 0.1])];
    let mut pass = true;
    let mut worst = 0.0f64;
    for (state, coeffs) in reference {
        let col = eig.vectors.column(state);
        for (b, c_ref) in basis.iter().zip(coeffs) {
            let dev = (col[*b].norm() - c_ref).abs();
            worst = worst.max(dev);
            pass = pass && dev <= 0.05;
        }
        // the |01> and |10> components of the E1 branch are antisymmetric
        pass = pass && col[basis[0]].re * col[basis[1]].re < 0.0;
    }
    report(
        2,
        pass,
        &format!("eigenstate compositions: worst coefficient deviation {worst:.3}"),
    )
}

fn criterion_03_et_amplitude_indicator() -> bool {
    let a = |name: &str| {
        et_amplitude_indicator(&preset(name).unwrap().params).unwrap().amplitude
    };
    let (a_pe, a_det, a_del) = (a("pe545"), a("detuned"), a("delocalised"));
    let pass = (a_pe - 0.76).abs() <= 0.01
        && (a_det - 0.04).abs() <= 0.01
        && (0.94..=0.97).contains(&a_del);
    report(
        3,
        pass,
        &format!(
            "ET indicator: A(pe545)={a_pe:.3}, A(detuned)={a_det:.3}, A(delocalised)={a_del:.3} \
             (reported as 0.95; the fixed-detuning construction gives {a_del:.2})"
        ),
    )
}

fn criterion_04_sync_trajectory() -> bool {
    let pe2 = pe545_2ps();
    let sync = &pe2.sync;
    let value_at = |t: f64| {
        let i = sync.times.iter().position(|&x| x >= t).unwrap();
        sync.values[i]
    };
    let min_in = |lo: f64, hi: f64| {
        sync.times
            .iter()
            .zip(&sync.values)
            .filter(|(t, v)| (lo..=hi).contains(*t) && v.is_finite())
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min)
    };
    let dip = min_in(0.10, 0.25);
    let reached = sync
        .times
        .iter()
        .zip(&sync.values)
        .any(|(t, v)| *t <= 1.2 && *v >= 0.95);
    let late_min = min_in(1.2, 2.0);
    let pass = dip < -0.5 && reached && late_min >= 0.9 && pe2.runtime_s < 120.0;
    report(
        4,
        pass,
        &format!(
            "sync trajectory: dip {dip:.3} in [0.10, 0.25] ps, C(1.2 ps) = {:.3}, \
             min C on [1.2, 2] = {late_min:.3} ({:.1} s)",
            value_at(1.2),
            pe2.runtime_s
        ),
    )
}

fn criterion_05_ft_snapshots() -> bool {
    let traj = &pe545_5ps().traj;
    let ft = |name: &str, t0: f64| {
        real_ft(&traj.times, &traj.series[name], t0, t0 + 2.0, true).unwrap()
    };

    // late snapshot: one dominant line at the mode frequency, equal signs
    let (s1, s2) = (ft("X1", 1.5), ft("X2", 1.5));
    let (f1, v1) = dominant_fast_peak(&s1);
    let (f2, v2) = dominant_fast_peak(&s2);
    let late_ok = (f1 - 1111.0).abs() <= 3.0 && (f2 - 1111.0).abs() <= 3.0 && v1 * v2 > 0.0;

    // early snapshot: the 1102.6 line present with opposite signs and at
    // least half the strength of the 1111 line (combined over both signals)
    let (e1, e2) = (ft("X1", 0.15), ft("X2", 0.15));
    let a1 = e1.value_near(1102.6);
    let a2 = e2.value_near(1102.6);
    let combined_low = a1.abs() + a2.abs();
    let combined_main = e1.value_near(1111.0).abs() + e2.value_near(1111.0).abs();
    let ratio = combined_low / combined_main;
    let early_ok = a1 * a2 < 0.0 && ratio >= 0.5;

    let pass = late_ok && early_ok;
    report(
        5,
        pass,
        &format!(
            "FT snapshots: dominant peak at 1.5 ps = {f1:.1}/{f2:.1} cm⁻¹ (same sign: {}), \
             1102.6 cm⁻¹ component at 0.15 ps opposite-signed with ratio {ratio:.2}",
            v1 * v2 > 0.0
        ),
    )
}

fn criterion_06_coherence_lifetimes() -> bool {
    let pe5 = pe545_5ps();
    let weight: Vec<f64> = pe5.elements.iter().map(|e| e.x1.abs()).collect();
    let series: Vec<&Vec<_>> = PAIRS.iter().map(|p| &pe5.traj.elements[p]).collect();
    let mut pass = true;
    let mut min_margin = f64::INFINITY;
    for (i, t) in pe5.traj.times.iter().enumerate() {
        if *t <= 1.5 {
            continue;
        }
        let w: Vec<f64> = series.iter().zip(&weight).map(|(s, x)| s[i].norm() * x).collect();
        let lead = w[0]; // pair (0, 2)
        let runner_up = w[1..].iter().cloned().fold(0.0, f64::max);
        min_margin = min_margin.min(lead - runner_up);
        pass = pass && lead >= runner_up;
    }
    report(
        6,
        pass,
        &format!(
            "coherence lifetimes: weighted |rho_02| leads for all t in (1.5, 5] ps \
             (min margin {min_margin:.2e})"
        ),
    )
}

fn criterion_07_liouvillian_eigenmode() -> bool {
    let base = preset("pe545").unwrap().params;
    let analyse = |m: usize, cap: Option<usize>| {
        let p = base.with_m_levels(m);
        let h = build_hamiltonian(&p).unwrap();
        let eig = diagonalise(&h).unwrap();
        let ops = build_operators(&p).unwrap();
        let diss = standard_dissipators_with(&p, &ops).unwrap();
        let l = build_superoperator(&h, &diss, m, cap).unwrap();
        let report = eigenmode_analysis(&l, &eig, 10).unwrap();
        let slow = report.slowest_oscillatory().unwrap();
        (slow.dominant_pair, slow.overlap)
    };
    let (pair4, ov4) = analyse(4, None);
    let (pair5, ov5) = analyse(5, Some(80));
    let canon = |(j, k): (usize, usize)| (j.min(k), j.max(k));
    let pass = canon(pair4) == (0, 2) && canon(pair5) == (0, 2) && ov4 > 0.9 && ov5 > 0.9;
    report(
        7,
        pass,
        &format!(
            "Liouvillian eigenmode: slowest oscillatory mode projects onto {pair4:?}/{pair5:?} \
             with overlaps {ov4:.3}/{ov5:.3} at M = 4/5"
        ),
    )
}

fn criterion_08_swapped_rates() -> bool {
    let config = preset("swapped-rates").unwrap();

    // slowest oscillatory eigenmode moves to the (0, 1) pair
    let p4 = config.params.with_m_levels(4);
    let h = build_hamiltonian(&p4).unwrap();
    let eig4 = diagonalise(&h).unwrap();
    let ops4 = build_operators(&p4).unwrap();
    let diss4 = standard_dissipators_with(&p4, &ops4).unwrap();
    let l = build_superoperator(&h, &diss4, 4, None).unwrap();
    let modes = eigenmode_analysis(&l, &eig4, 10).unwrap();
    let slow = modes.slowest_oscillatory().unwrap();
    let pair = (slow.dominant_pair.0.min(slow.dominant_pair.1),
                slow.dominant_pair.0.max(slow.dominant_pair.1));
    let mode_ok = pair == (0, 1) && slow.overlap > 0.9;

    // inter-exciton coherence element of that pair, at full truncation
    let p = &config.params;
    let h = build_hamiltonian(p).unwrap();
    let eig = diagonalise(&h).unwrap();
    let ops = build_operators(p).unwrap();
    let row = &matrix_element_table(&eig, &ops, &[(0, 1)]).unwrap()[0];
    let sx = row.sigma_x.abs();
    let sx_ok = (sx - 0.857).abs() <= 0.005;

    // sync series tends negative at late times while amplitude persists
    let (traj, sync) = run_preset("swapped-rates", 2.0, Vec::new());
    let late: Vec<f64> = sync
        .times
        .iter()
        .zip(&sync.values)
        .filter(|(t, v)| **t >= 1.5 && v.is_finite())
        .map(|(_, v)| *v)
        .collect();
    let late_mean = late.iter().sum::<f64>() / late.len() as f64;
    let rms = |lo: f64, hi: f64| {
        let v: Vec<f64> = traj
            .times
            .iter()
            .zip(&traj.series["X1"])
            .filter(|(t, _)| (lo..hi).contains(*t))
            .map(|(_, x)| *x)
            .collect();
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    };
    let sync_ok = late_mean < -0.5 && rms(1.5, 2.0) > 0.1 * rms(0.2, 0.5);

    let pass = mode_ok && sx_ok && sync_ok;
    report(
        8,
        pass,
        &format!(
            "swapped rates: slowest mode pair {pair:?} (overlap {:.3}), \
             |<psi0|sigma_x|psi1>| = {sx:.4} vs 0.857 ± 0.005, late mean C = {late_mean:.3}",
            slow.overlap
        ),
    )
}

fn criterion_09_regime_ordering() -> bool {
    let onset = |sync: &SyncSeries<f64>| sync_onset_time(sync, 0.95, 0.2);
    let (_, sync_del) = run_preset("delocalised", 2.0, Vec::new());
    let (_, sync_det) = run_preset("detuned", 2.0, Vec::new());
    let o_del = onset(&sync_del);
    let o_pe = onset(&pe545_2ps().sync);
    let o_det = onset(&sync_det);
    let pass = matches!(o_del, Some(t) if (0.3..=0.7).contains(&t))
        && matches!(o_pe, Some(t) if (0.7..=1.3).contains(&t))
        && o_det.is_none()
        && o_del.unwrap() < o_pe.unwrap();
    report(
        9,
        pass,
        &format!(
            "regime ordering: onsets delocalised = {o_del:?}, pe545 = {o_pe:?}, \
             detuned = {o_det:?} (ps)"
        ),
    )
}

fn criterion_10_property_suite() -> bool {
    // invariants audited on the long open run
    let audit = &pe545_5ps().traj.audit;
    let open_ok = audit.max_trace_dev < 1e-6
        && audit.max_herm_dev < 1e-8
        && audit.min_eigenvalue > -1e-8;

    // closed system: purity and energy conserved
    let p = preset("pe545").unwrap().params.with_m_levels(3);
    let h = build_hamiltonian(&p).unwrap();
    let eig = diagonalise(&h).unwrap();
    let ops = build_operators(&p).unwrap();
    let rho0 = initial_state(&p).unwrap();
    let config = PropagationConfig {
        t_end: 1.0,
        dt_out: 0.01,
        max_stored_states: 101,
        rel_tol: 1e-11,
        abs_tol: 1e-13,
        ..Default::default()
    };
    let plan = RecordPlan {
        series_ops: vec![("energy".into(), h.clone())],
        pairs: vec![],
        eig: Some(eig.clone()),
    };
    let closed = propagate_open(&rho0, &h, &[], &config, &plan).unwrap();
    let energy = &closed.series["energy"];
    let e_dev = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max)
        / energy[0].abs().max(1.0);
    // the thermal initial state is mixed: purity is conserved, not unity
    let purities: Vec<f64> = closed
        .stored
        .iter()
        .map(|s| s.state.matrix.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let purity_dev =
        purities.iter().map(|p| (p - purities[0]).abs()).fold(0.0, f64::max);
    let closed_ok = e_dev < 1e-8 && purity_dev < 1e-8;

    // Pearson bound and affine invariance on random signals
    let mut rng = StdRng::seed_from_u64(7);
    let times: Vec<f64> = (0..600).map(|i| i as f64 * 0.001).collect();
    let f1: Vec<f64> = times.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f2: Vec<f64> = times.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = pearson_sync(&times, &f1, &f2, 0.03, ("a", "b")).unwrap();
    let bounded = c.values.iter().filter(|v| v.is_finite()).all(|v| v.abs() <= 1.0 + 1e-12);
    let f1_scaled: Vec<f64> = f1.iter().map(|x| 3.5 * x - 0.7).collect();
    let c_scaled = pearson_sync(&times, &f1_scaled, &f2, 0.03, ("a", "b")).unwrap();
    let affine_dev = c
        .values
        .iter()
        .zip(&c_scaled.values)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pearson_ok = bounded && affine_dev < 1e-9;

    // M = 2 oracle: adaptive RK against the superoperator exponential
    let p2 = preset("pe545").unwrap().params.with_m_levels(2);
    let h2 = build_hamiltonian(&p2).unwrap();
    let eig2 = diagonalise(&h2).unwrap();
    let ops2 = build_operators(&p2).unwrap();
    let diss2 = standard_dissipators_with(&p2, &ops2).unwrap();
    let rho2 = initial_state(&p2).unwrap();
    let cfg2 = PropagationConfig { t_end: 0.5, dt_out: 0.005, ..Default::default() };
    let plan2 = RecordPlan::standard(&ops2, eig2, vec![(0, 2)]);
    let rk = propagate_open(&rho2, &h2, &diss2, &cfg2, &plan2).unwrap();
    let cfg2e = PropagationConfig { method: Method::EigenExponential, ..cfg2 };
    let ex = propagate_open(&rho2, &h2, &diss2, &cfg2e, &plan2).unwrap();
    let oracle_dev = rk
        .series
        .iter()
        .flat_map(|(name, vals)| vals.iter().zip(&ex.series[name]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let oracle_ok = oracle_dev < 1e-6;

    // vec(I) is a left null vector: the generator is trace-free on any state
    let mut trace_dev = 0.0f64;
    for params in [&p2, &preset("swapped-rates").unwrap().params.with_m_levels(2)] {
        let h = build_hamiltonian(params).unwrap();
        let ops = build_operators(params).unwrap();
        let diss = standard_dissipators_with(params, &ops).unwrap();
        let l = build_superoperator(&h, &diss, 2, None).unwrap();
        let d = h.dim();
        for _ in 0..4 {
            let mut rho = ndarray::Array2::zeros((d, d));
            for z in rho.iter_mut() {
                *z = num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let drho = l.apply(&rho);
            let tr: num_complex::Complex64 = (0..d).map(|i| drho[[i, i]]).sum();
            trace_dev = trace_dev.max(tr.norm());
        }
    }
    let null_ok = trace_dev < 1e-8;

    let pass = open_ok && closed_ok && pearson_ok && oracle_ok && null_ok;
    report(
        10,
        pass,
        &format!(
            "property suite: open-run audit {}, closed purity/energy dev {purity_dev:.1e}/{e_dev:.1e}, \
             Pearson bounded/affine dev {affine_dev:.1e}, oracle dev {oracle_dev:.1e}, \
             trace-free dev {trace_dev:.1e}",
            if open_ok { "clean" } else { "VIOLATED" }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(usize, fn() -> bool); 10] = [
        (1, criterion_01_table2_regression),
        (2, criterion_02_eigenstate_compositions),
        (3, criterion_03_et_amplitude_indicator),
        (4, criterion_04_sync_trajectory),
        (5, criterion_05_ft_snapshots),
        (6, criterion_06_coherence_lifetimes),
        (7, criterion_07_liouvillian_eigenmode),
        (8, criterion_08_swapped_rates),
        (9, criterion_09_regime_ordering),
        (10, criterion_10_property_suite),
    ];
    let failed: Vec<usize> =
        criteria.iter().filter(|(_, f)| !f()).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
