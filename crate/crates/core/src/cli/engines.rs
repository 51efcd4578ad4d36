//! Dispatch from a validated [`RunConfig`] to the engines.

use std::time::Instant;

use crate::classical::{simulate_autocorrelation, EnsembleConfig};
use crate::couplings::{
    build_coupling_set, diagonalize_chain, lanczos_analytic, lanczos_exact, CoefficientMode,
    CouplingSet, LanczosChain,
};
use crate::error::{param, Error, Result};
use crate::exactqm::{
    build_full_hamiltonian_with_cap, infinite_t_autocorrelation, TraceConfig, TraceMode,
};
use crate::heff::{is_closed, reachable_basis, HamiltonianParams};
use crate::opbasis::{Basis, TruncationSpec};
use crate::propagate::{run_ieom, sample_times, TimeSeries};
use crate::reference::s_frozen;

use super::config::{BasisKind, Engine, RunConfig};
use super::csvio::CoefficientTable;

fn coupling_set(cfg: &RunConfig) -> Result<CouplingSet> {
    let gamma = cfg.gamma.ok_or_else(|| param("gamma", "missing"))?;
    let n_bath = cfg.n_bath.ok_or_else(|| param("n_bath", "missing"))?;
    build_coupling_set(gamma, n_bath)
}

fn chain(cfg: &RunConfig, cs: &CouplingSet, n_tr: usize) -> Result<LanczosChain> {
    match cfg.coefficient_mode() {
        CoefficientMode::Exact => lanczos_exact(cs, n_tr),
        CoefficientMode::Analytic => lanczos_analytic(cs.gamma, n_tr),
    }
}

/// Hamiltonian parameters of an iEoM run.
pub fn ieom_params(cfg: &RunConfig) -> Result<HamiltonianParams> {
    let cs = coupling_set(cfg)?;
    let n_max = cfg.n_max.clone().ok_or_else(|| param("n_max", "missing"))?;
    let lc = chain(cfg, &cs, n_max.len())?;
    let mut p = HamiltonianParams::new(lc, TruncationSpec::new(n_max)?)?
        .with_representation(cfg.representation)?;
    p.h_central = cfg.h;
    p.z_nuclear = cfg.z_nuclear;
    p.enable_nuclear_zeeman = cfg.enable_nuclear_zeeman;
    p.enable_central = cfg.enable_central;
    p.enable_chain = cfg.enable_chain;
    p.validate()?;
    Ok(p)
}

/// Basis of an iEoM run, read from or written to the cache when one is set.
pub fn ieom_basis(cfg: &RunConfig, params: &HamiltonianParams) -> Result<Basis> {
    if let Some(path) = cfg.basis_cache.as_deref().filter(|p| p.exists()) {
        let basis = Basis::load(path)?;
        if basis.trunc != params.trunc {
            return Err(param(
                "basis_cache",
                format!("{} was built for a different n_max", path.display()),
            ));
        }
        if cfg.basis == BasisKind::Full && !basis.is_full() {
            return Err(param("basis_cache", "holds a reduced basis but basis=full"));
        }
        if !is_closed(params, &basis)? {
            return Err(param(
                "basis_cache",
                format!("{} is not closed under the enabled terms", path.display()),
            ));
        }
        log::info!("loaded basis of {} states from {}", basis.len(), path.display());
        return Ok(basis);
    }
    let basis = match cfg.basis {
        BasisKind::Full => Basis::enumerate_with_limit(&params.trunc, cfg.max_states)?,
        BasisKind::Reachable => reachable_basis(params, cfg.max_states)?,
    };
    if let Some(path) = &cfg.basis_cache {
        basis.save(path)?;
        log::info!("saved basis to {}", path.display());
    }
    Ok(basis)
}

/// Runs the configured time-series engine. The configuration is echoed
/// into the metadata, followed by derived quantities.
pub fn simulate(cfg: &RunConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let started = Instant::now();
    let mut derived: Vec<(String, String)> = Vec::new();
    let mut series = match cfg.engine {
        Engine::Frozen => {
            let times = sample_times(cfg.dt, cfg.t_max, cfg.stride)?;
            TimeSeries::from_fn(times, |t| s_frozen(t, 1.0))
        }
        Engine::Ieom => {
            let cs = coupling_set(cfg)?;
            derived.push(("prefactor".into(), format!("{:?}", cs.prefactor)));
            derived.push(("n_eff".into(), format!("{:?}", cs.n_eff)));
            let params = ieom_params(cfg)?;
            let basis = ieom_basis(cfg, &params)?;
            derived.push(("basis_states".into(), basis.len().to_string()));
            run_ieom(&params, &basis, cfg.dt, cfg.t_max, cfg.stride)?
        }
        Engine::Classical => {
            let cs = coupling_set(cfg)?;
            derived.push(("prefactor".into(), format!("{:?}", cs.prefactor)));
            derived.push(("n_eff".into(), format!("{:?}", cs.n_eff)));
            let ens = EnsembleConfig {
                samples: cfg.samples,
                seed: cfg.seed,
                dt: cfg.dt,
                t_max: cfg.t_max,
                stride: cfg.stride,
                mode: cfg.mode,
                h_central: cfg.h,
            };
            simulate_autocorrelation(&ens, &cs)?
        }
        Engine::Exact => {
            let cs = coupling_set(cfg)?;
            derived.push(("prefactor".into(), format!("{:?}", cs.prefactor)));
            derived.push(("n_eff".into(), format!("{:?}", cs.n_eff)));
            let op = build_full_hamiltonian_with_cap(cs.couplings()?, cfg.h, cfg.max_bath)?;
            let mut tc = TraceConfig::default_for(op.dim());
            tc.dt = cfg.dt;
            tc.t_max = cfg.t_max;
            tc.stride = cfg.stride;
            tc.block = cfg.block;
            let stochastic = TraceMode::Stochastic {
                vectors: 0,
                seed: cfg.seed,
                estimator: cfg.estimator,
            };
            tc.mode = match (cfg.vectors, tc.mode) {
                (Some(0), _) => TraceMode::Full,
                (None, TraceMode::Full) => TraceMode::Full,
                (Some(n), _) => with_vectors(stochastic, n),
                (None, TraceMode::Stochastic { vectors, .. }) => with_vectors(stochastic, vectors),
            };
            derived.push(("hilbert_dim".into(), op.dim().to_string()));
            derived.push((
                "trace".into(),
                match tc.mode {
                    TraceMode::Full => "full".to_string(),
                    TraceMode::Stochastic { vectors, .. } => format!("stochastic:{vectors}"),
                },
            ));
            infinite_t_autocorrelation(&op, &tc)?
        }
        Engine::Coeffs => {
            return Err(Error::Unsupported(
                "coeffs produces a coefficient table, not a time series".into(),
            ))
        }
    };
    series.metadata = cfg.to_pairs();
    series.metadata.extend(derived);
    series.push_meta("j_q", "1.0");
    series.push_meta("program", concat!("csm-ieom ", env!("CARGO_PKG_VERSION")));
    series.push_meta("elapsed_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    Ok(series)
}

fn with_vectors(mode: TraceMode, n: usize) -> TraceMode {
    match mode {
        TraceMode::Stochastic { seed, estimator, .. } => TraceMode::Stochastic {
            vectors: n,
            seed,
            estimator,
        },
        full => full,
    }
}

/// `α_j`, `β_j`, chain eigenvalues `ε_j` and head weights `Q_{1,j}`.
pub fn coefficient_table(cfg: &RunConfig) -> Result<CoefficientTable> {
    cfg.validate()?;
    let cs = coupling_set(cfg)?;
    let n_tr = cfg.chain_length().ok_or_else(|| param("n_tr", "missing"))?;
    let lc = chain(cfg, &cs, n_tr)?;
    let eig = diagonalize_chain(&lc)?;
    let mut meta = cfg.to_pairs();
    meta.push(("prefactor".into(), format!("{:?}", cs.prefactor)));
    meta.push(("n_eff".into(), format!("{:?}", cs.n_eff)));
    meta.push(("n_eff_asymptotic".into(), format!("{:?}", cs.n_eff_asymptotic())));
    Ok(CoefficientTable {
        metadata: meta,
        betas: (1..=n_tr).map(|j| lc.beta(j)).collect(),
        alphas: lc.alphas,
        energies: eig.energies,
        head_weights: eig.head_weights,
    })
}
