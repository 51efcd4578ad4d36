//! Acceptance criteria 1–8. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured quantities. The heavy runs hold a shared lock so
//! that at most one of them is resident at a time.

use std::sync::{Mutex, MutexGuard, OnceLock};

use num_complex::Complex64;

use csm_ieom::classical::{simulate_autocorrelation, ClassicalMode, EnsembleConfig};
use csm_ieom::cli::compare::{compare, dip, fit_period, local_maxima};
use csm_ieom::couplings::{
    build_coupling_set, lanczos_analytic, lanczos_exact, pair_overlap_sum, polynomial_values,
    BathSize,
};
use csm_ieom::exactqm::{
    build_full_hamiltonian, build_full_hamiltonian_with_cap, infinite_t_autocorrelation,
    Estimator, TraceConfig, TraceMode, DEFAULT_MAX_BATH,
};
use csm_ieom::heff::{
    assemble_central, assemble_chain, assemble_nuclear_zeeman, assemble_total, assemble_zeeman,
    reachable_basis, HamiltonianParams, Representation,
};
use csm_ieom::opbasis::{Basis, TruncationSpec};
use csm_ieom::propagate::{detect_revival, run_ieom, sample_times, TimeSeries};
use csm_ieom::reference::{envelope, larmor_frequency, s_frozen};
use csm_ieom::sparse::hermiticity_defect;
use csm_ieom::Result;

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn frozen_series(dt: f64, t_max: f64, stride: usize) -> TimeSeries {
    TimeSeries::from_fn(sample_times(dt, t_max, stride).unwrap(), |t| s_frozen(t, 1.0))
}

/// iEoM with only the central term: the chain is a single site.
fn central_only(n1: u32, dt: f64, t_max: f64, stride: usize) -> Result<TimeSeries> {
    let chain = lanczos_analytic(0.01, 1)?;
    let mut p = HamiltonianParams::new(chain, TruncationSpec::new(vec![n1])?)?;
    p.enable_chain = false;
    let basis = reachable_basis(&p, u64::MAX)?;
    run_ieom(&p, &basis, dt, t_max, stride)
}

fn max_dev(a: &TimeSeries, b: &TimeSeries, t_max: f64) -> f64 {
    a.times
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .filter(|(t, _)| **t <= t_max + 1e-9)
        .map(|(_, (x, y))| (x.re - y.re).abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_1_frozen_field_exactness() {
    let _g = heavy();
    let (dt, t_max, stride) = (0.01, 20.0, 10);
    let s = central_only(100, dt, t_max, stride).unwrap();
    let d = max_dev(&s, &frozen_series(dt, t_max, stride), t_max);
    let ok = d < 1e-4;
    report(1, ok, format!("max|S - S_frozen| = {d:.3e} on [0,20] (limit 1e-4)"));
    assert!(ok);
}

#[test]
fn criterion_2_revival_scaling() {
    let _g = heavy();
    let (dt, stride) = (0.01, 5);
    let mut ratios = Vec::new();
    for n1 in [25u32, 49, 100] {
        let t_max = 4.5 * (n1 as f64).sqrt();
        let s = central_only(n1, dt, t_max, stride).unwrap();
        let t = detect_revival(&s, &frozen_series(dt, t_max, stride), 0.01).unwrap();
        ratios.push((n1, t.map(|t| t / (n1 as f64).sqrt())));
    }
    let ok = ratios
        .iter()
        .all(|(_, r)| r.is_some_and(|r| (3.0..=4.0).contains(&r)));
    let detail = ratios
        .iter()
        .map(|(n, r)| format!("n_max(1)={n}: {}", r.map_or("none".into(), |r| format!("{r:.3}"))))
        .collect::<Vec<_>>()
        .join(", ");
    report(2, ok, format!("t_thresh/sqrt(n_max(1)): {detail} (range [3,4])"));
    assert!(ok);
}

/// Converged iEoM triple for `N = 18`, `γ = 1/18` and its step size.
const IEOM_18_NMAX: [u32; 2] = [181, 4];
const IEOM_DT: f64 = 0.1;
const EXACT_DT: f64 = 0.2;
const EXACT_VECTORS: usize = 100;
const T_END: f64 = 50.0;

fn ieom_finite(gamma: f64, n: usize, n_max: &[u32], dt: f64, t_max: f64) -> Result<TimeSeries> {
    let cs = build_coupling_set(gamma, BathSize::Finite(n))?;
    let chain = lanczos_exact(&cs, n_max.len())?;
    let p = HamiltonianParams::new(chain, TruncationSpec::new(n_max.to_vec())?)?;
    let basis = reachable_basis(&p, 1 << 28)?;
    let stride = (0.2 / dt).round().max(1.0) as usize;
    run_ieom(&p, &basis, dt, t_max, stride)
}

fn exact_finite(gamma: f64, n: usize, t_max: f64) -> Result<TimeSeries> {
    let cs = build_coupling_set(gamma, BathSize::Finite(n))?;
    let op = build_full_hamiltonian_with_cap(cs.couplings()?, [0.0; 3], DEFAULT_MAX_BATH)?;
    let cfg = TraceConfig {
        dt: EXACT_DT,
        t_max,
        stride: 1,
        mode: TraceMode::Stochastic {
            vectors: EXACT_VECTORS,
            seed: 7,
            estimator: Estimator::Polarized,
        },
        block: 16,
    };
    infinite_t_autocorrelation(&op, &cfg)
}

struct ZeroFieldComparison {
    max_dev: f64,
    dip_ieom: f64,
    dip_exact: f64,
    plateau_ieom: f64,
    plateau_exact: f64,
    stderr_end: f64,
}

fn at(series: &TimeSeries, t: f64) -> f64 {
    let k = series
        .times
        .iter()
        .position(|&x| (x - t).abs() < 1e-9)
        .expect("time on grid");
    series.values[k].re
}

fn zero_field_comparison(gamma: f64, n: usize, n_max: &[u32]) -> Result<ZeroFieldComparison> {
    let exact = exact_finite(gamma, n, T_END)?;
    let ieom = ieom_finite(gamma, n, n_max, IEOM_DT, T_END)?;
    let stats = compare(&ieom, &exact, (0.0, 30.0), None)?;
    let first_dip = |s: &TimeSeries| dip(&s.times, &s.real(), (0.0, 10.0)).unwrap().t;
    Ok(ZeroFieldComparison {
        max_dev: stats.max_abs_diff,
        dip_ieom: first_dip(&ieom),
        dip_exact: first_dip(&exact),
        plateau_ieom: at(&ieom, T_END),
        plateau_exact: at(&exact, T_END),
        stderr_end: *exact.stderr.as_ref().unwrap().last().unwrap(),
    })
}

static GAMMA_18: OnceLock<ZeroFieldComparison> = OnceLock::new();

fn gamma_18() -> &'static ZeroFieldComparison {
    GAMMA_18.get_or_init(|| zero_field_comparison(1.0 / 18.0, 18, &IEOM_18_NMAX).unwrap())
}

#[test]
fn criterion_3_zero_field_small_bath() {
    let _g = heavy();
    let c = gamma_18();
    let dips = [c.dip_ieom, c.dip_exact];
    let plateaus = [c.plateau_ieom, c.plateau_exact];
    let ok = c.max_dev <= 0.02
        && dips.iter().all(|t| (t - 3.5).abs() <= 0.5)
        && plateaus.iter().all(|s| *s > 0.05 && *s < 0.09);
    report(
        3,
        ok,
        format!(
            "max|dRe S| on [0,30] = {:.4} (limit 0.02); dips {:.3}/{:.3} (3.5±0.5); \
             S(50) = {:.4}/{:.4} (0.05,0.09), exact stderr {:.1e}",
            c.max_dev, c.dip_ieom, c.dip_exact, c.plateau_ieom, c.plateau_exact, c.stderr_end
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_gamma_convergence_trend() {
    let _g = heavy();
    // the exact reference for N = 36 is needed first; it needs 2^37 amplitudes
    // per vector
    match exact_finite(1.0 / 36.0, 36, T_END) {
        Err(e) => {
            report(4, false, format!("exact reference for N=36 unavailable: {e}"));
            panic!("exact reference for N=36 unavailable: {e}");
        }
        Ok(exact) => {
            let ieom = ieom_finite(1.0 / 36.0, 36, &IEOM_18_NMAX, IEOM_DT, T_END).unwrap();
            let d36 = compare(&ieom, &exact, (0.0, 30.0), None).unwrap().max_abs_diff;
            let d18 = gamma_18().max_dev;
            let ok = d36 <= d18;
            report(4, ok, format!("max dev gamma=1/36: {d36:.4}, gamma=1/18: {d18:.4}"));
            assert!(ok);
        }
    }
}

#[test]
fn criterion_5_classical_frozen_consistency() {
    let _g = heavy();
    let cs = build_coupling_set(1.0 / 18.0, BathSize::Finite(18)).unwrap();
    let cfg = EnsembleConfig {
        samples: 1_000_000,
        seed: 5,
        dt: 0.02,
        t_max: 20.0,
        stride: 10,
        mode: ClassicalMode::Frozen,
        h_central: [0.0; 3],
    };
    let s = simulate_autocorrelation(&cfg, &cs).unwrap();
    let se = s.stderr.as_ref().unwrap();
    let mut worst_abs = 0.0f64;
    let mut worst_sigma = 0.0f64;
    for (k, &t) in s.times.iter().enumerate() {
        let d = (s.values[k].re - s_frozen(t, 1.0)).abs();
        worst_abs = worst_abs.max(d);
        if se[k] > 0.0 {
            worst_sigma = worst_sigma.max(d / se[k]);
        } else {
            assert!(d < 1e-12);
        }
    }
    let ok = worst_abs < 1e-3 && worst_sigma < 3.0;
    report(
        5,
        ok,
        format!("max dev {worst_abs:.2e} (limit 1e-3), max dev/stderr {worst_sigma:.2} (limit 3)"),
    );
    assert!(ok);
}

/// iEoM triple for `γ = 1/36`, `N = 200`.
const IEOM_36_NMAX: [u32; 2] = [181, 4];
const CLASSICAL_SAMPLES: usize = 20_000;

#[test]
fn criterion_6_plateau_inequality() {
    let _g = heavy();
    let gamma = 1.0 / 36.0;
    let ieom = ieom_finite(gamma, 200, &IEOM_36_NMAX, IEOM_DT, T_END).unwrap();
    let cs = build_coupling_set(gamma, BathSize::Finite(200)).unwrap();
    let cfg = EnsembleConfig {
        samples: CLASSICAL_SAMPLES,
        seed: 6,
        dt: 0.05,
        t_max: T_END,
        stride: 20,
        mode: ClassicalMode::Dynamic,
        h_central: [0.0; 3],
    };
    let cl = simulate_autocorrelation(&cfg, &cs).unwrap();
    let (si, sc) = (at(&ieom, T_END), at(&cl, T_END));
    let se = *cl.stderr.as_ref().unwrap().last().unwrap();
    let ok = si < 1.0 / 12.0 && sc < 1.0 / 12.0;
    report(
        6,
        ok,
        format!("S(50): iEoM {si:.4}, classical {sc:.4} ± {se:.1e} (bound 1/12 = 0.0833)"),
    );
    assert!(ok);
}

#[test]
fn criterion_7_finite_field() {
    let _g = heavy();
    let h = 10.0;
    let chain = lanczos_analytic(0.01, 2).unwrap();
    let mut p = HamiltonianParams::new(chain, TruncationSpec::new(vec![51, 2]).unwrap()).unwrap();
    p.h_central = [h, 0.0, 0.0];
    let basis = Basis::enumerate(&p.trunc).unwrap();
    let s = run_ieom(&p, &basis, 0.002, 2.6, 1).unwrap();
    let peaks = local_maxima(&s.times, &s.real(), (0.0, 2.5));
    let worst = peaks
        .iter()
        .map(|e| (e.value / envelope(e.t, 1.0) - 1.0).abs())
        .fold(0.0, f64::max);
    let period = fit_period(&peaks);
    let want = 2.0 * std::f64::consts::PI / larmor_frequency(h, 1.0);
    let period_err = period.map(|p| (p / want - 1.0).abs());
    let ok = peaks.len() >= 2 && worst <= 0.05 && period_err.is_some_and(|e| e <= 0.01);
    report(
        7,
        ok,
        format!(
            "{} peaks, max |peak/envelope - 1| = {worst:.4} (limit 0.05); period {:?} vs {want:.5}, rel err {:?} (limit 0.01)",
            peaks.len(),
            period,
            period_err
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_structural_suite() {
    let _g = heavy();
    let mut lines = Vec::new();
    let mut all = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        all &= ok;
        lines.push(format!("{name}: {} {detail}", if ok { "ok" } else { "FAIL" }));
    };

    // hermiticity of every assembled operator in both representations
    let cs = build_coupling_set(0.1, BathSize::Finite(40)).unwrap();
    let chain = lanczos_exact(&cs, 3).unwrap();
    let mut worst_h = 0.0f64;
    for rep in [Representation::Chain, Representation::Diagonal] {
        let mut p = HamiltonianParams::new(chain.clone(), TruncationSpec::new(vec![6, 4, 3]).unwrap())
            .unwrap()
            .with_representation(rep)
            .unwrap();
        p.h_central = [0.4, -1.3, 2.0];
        p.enable_nuclear_zeeman = true;
        let b = Basis::enumerate(&p.trunc).unwrap();
        for op in [
            assemble_central(&p, &b),
            assemble_chain(&p, &b),
            assemble_zeeman(&p, &b),
            assemble_nuclear_zeeman(&p, &b),
            assemble_total(&p, &b),
        ] {
            worst_h = worst_h.max(hermiticity_defect(&op.unwrap()));
        }
    }
    check("hermiticity", worst_h < 1e-14, format!("{worst_h:.1e}"));

    // orthonormality of the chain polynomials on the coupling set
    let cs = build_coupling_set(1.0 / 36.0, BathSize::Finite(200)).unwrap();
    let p = polynomial_values(cs.couplings().unwrap(), 30).unwrap();
    let mut gram = 0.0f64;
    for a in 0..p.len() {
        for b in 0..p.len() {
            let g: f64 = p[a].iter().zip(&p[b]).map(|(x, y)| x * y).sum();
            gram = gram.max((g - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    check("gram", gram < 1e-10, format!("{gram:.1e}"));

    // chain and diagonal representations agree where truncation is inactive
    let chain = lanczos_analytic(0.05, 2).unwrap();
    let base = HamiltonianParams::new(chain, TruncationSpec::new(vec![REP_NMAX, REP_NMAX]).unwrap()).unwrap();
    let b = Basis::enumerate(&base.trunc).unwrap();
    let sc = run_ieom(&base, &b, 0.01, REP_TMAX, 10).unwrap();
    let pd = base.clone().with_representation(Representation::Diagonal).unwrap();
    let sd = run_ieom(&pd, &b, 0.01, REP_TMAX, 10).unwrap();
    let rep = sc
        .values
        .iter()
        .zip(&sd.values)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    check("representations", rep < 1e-10, format!("{rep:.1e}"));

    // fourth-order convergence of the integrator
    let chain = lanczos_analytic(0.1, 1).unwrap();
    let mut p = HamiltonianParams::new(chain, TruncationSpec::new(vec![6]).unwrap()).unwrap();
    p.enable_chain = false;
    let b = Basis::enumerate(&p.trunc).unwrap();
    let run = |dt: f64| run_ieom(&p, &b, dt, 4.0, (0.5 / dt).round() as usize).unwrap();
    let reference = run(0.05 / 8.0);
    let err = |s: &TimeSeries| {
        s.values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    };
    let ratio = err(&run(0.05)) / err(&run(0.025));
    check("rk4 order", (ratio - 16.0).abs() <= 3.0, format!("ratio {ratio:.2}"));

    // commutator weight halves with γ
    let weight = |gamma: f64| {
        let cs = build_coupling_set(gamma, BathSize::Finite((40.0 / gamma) as usize)).unwrap();
        pair_overlap_sum(&cs, 1, 1).unwrap()
    };
    let (w1, w2) = (weight(1.0 / 50.0), weight(1.0 / 100.0));
    let r = w1 / w2;
    check("1/N_eff scaling", (r - 2.0).abs() <= 0.1, format!("ratio {r:.4}"));

    // two-spin exact dynamics
    let cs = build_coupling_set(1.0, BathSize::Finite(1)).unwrap();
    let op = build_full_hamiltonian(&cs, [0.0; 3]).unwrap();
    let cfg = TraceConfig {
        dt: 0.01,
        t_max: 20.0,
        stride: 10,
        mode: TraceMode::Full,
        block: 4,
    };
    let s = infinite_t_autocorrelation(&op, &cfg).unwrap();
    let two = s
        .times
        .iter()
        .zip(&s.values)
        .map(|(&t, v)| (v - Complex64::new(0.125 + 0.125 * t.cos(), 0.0)).norm())
        .fold(0.0, f64::max);
    check("two-spin exact", two < 1e-6, format!("{two:.1e}"));

    report(8, all, lines.join("; "));
    assert!(all);
}

const REP_NMAX: u32 = 12;
const REP_TMAX: f64 = 2.0;
