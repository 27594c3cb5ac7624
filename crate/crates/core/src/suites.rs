//! Named check suites shared by the command line runner and the acceptance tests.
//!
//! Every suite starts from its own [`Settings`] defaults; a run configuration
//! overrides individual fields.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    self, asymptotic_commutator, averaged_potential_profile, dyson_cocycle, exact_cocycle, fit_sensitivity_constant,
    free_asymptotic_observable, mehler_grid_comparison, trap_removal, HamiltonianSpec, SectorDynamics, Trap, QUAD_TOL_REL,
    SENSITIVITY_CONSTANT,
};
use crate::error::{Error, Result};
use crate::fock::{self, EmbedInput, FockBasis, FullOperator, LocalOperator, SectorOperator, DEFAULT_MEMORY_BUDGET};
use crate::lattice::{wave_packet, Grid, Potential, WaveFn};
use crate::numkit::{self, CMatrix, C64, ONE};
use crate::report::{strictly_decreasing, CheckReport, Series};
use crate::resolvent::{gauge_average, matrix_unit, matrix_unit_composite, monomial, resolvent, ResolventSpec};
use crate::structure::{self, cluster_limit_check, coherence_check, kappa, ClusterVectors, GradedOperator, GradedTerm};
use crate::thermo;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub grid: Grid,
    pub nmax: usize,
    pub memory_budget: u64,
    pub potential: Potential,
    pub trap: Trap,
    pub times: Vec<f64>,
    pub dyson_order: usize,
    /// Cauchy tolerance of the Dyson step doubling, relative to `‖C‖`.
    pub quad_tol: f64,
    pub betas: Vec<f64>,
    /// Chemical potential; `−V(0) − 0.1` when unset.
    pub mu: Option<f64>,
    pub allow_mu_override: bool,
    pub seed: u64,
}

impl Settings {
    pub fn new(grid: Grid, nmax: usize) -> Settings {
        Settings {
            grid,
            nmax,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            potential: Potential::Zero,
            trap: Trap::Infinite,
            times: vec![0.5],
            dyson_order: 6,
            quad_tol: QUAD_TOL_REL,
            betas: vec![0.25, 1.0, 4.0],
            mu: None,
            allow_mu_override: false,
            seed: 42,
        }
    }

    fn on(d: usize, h: f64, periodic: bool, nmax: usize) -> Settings {
        Settings::new(Grid::new(d, h, periodic).expect("valid default grid"), nmax)
    }

    fn with_potential(self, potential: Potential) -> Settings {
        Settings { potential, ..self }
    }

    fn with_trap(self, trap: Trap) -> Settings {
        Settings { trap, ..self }
    }

    fn with_times(self, times: &[f64]) -> Settings {
        Settings { times: times.to_vec(), ..self }
    }

    pub fn basis(&self) -> Result<Arc<FockBasis>> {
        FockBasis::with_budget(self.grid.d, self.nmax, self.memory_budget)
    }

    pub fn spec(&self) -> Result<HamiltonianSpec> {
        HamiltonianSpec::new(self.grid, self.potential.table(&self.grid)?, self.trap, 0.0)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn first_time(&self) -> Result<f64> {
        self.times.first().copied().ok_or_else(|| Error::InvalidArgument("no evolution times configured".into()))
    }

    fn need_nmax(&self, at_least: usize) -> Result<()> {
        if self.nmax < at_least {
            return Err(Error::InvalidArgument(format!("this suite needs nmax ≥ {at_least}, got {}", self.nmax)));
        }
        Ok(())
    }
}

type Runner = fn(&Settings) -> Result<Vec<CheckReport>>;

pub struct Suite {
    pub name: &'static str,
    pub anchor: &'static str,
    pub defaults: fn() -> Settings,
    runner: Runner,
}

impl Suite {
    /// Runs the suite; errors become a failed report, budget violations a skipped one.
    pub fn run(&self, settings: &Settings) -> Vec<CheckReport> {
        let start = Instant::now();
        match (self.runner)(settings) {
            Ok(r) => r,
            Err(e @ Error::Budget { .. }) => vec![CheckReport::skipped(self.name, self.anchor, format!("skipped: {e}")).timed(start)],
            Err(e) => vec![CheckReport::failed(self.name, self.anchor, e.to_string()).timed(start)],
        }
    }
}

pub static SUITES: &[Suite] = &[
    Suite { name: "ccr", anchor: "canonical commutation relations", defaults: ccr_defaults, runner: ccr },
    Suite { name: "resolvent", anchor: "resolvent identities and gauge covariance", defaults: resolvent_defaults, runner: resolvent_suite },
    Suite { name: "matrix_units", anchor: "matrix units from resolvent-built operators", defaults: matrix_units_defaults, runner: matrix_units },
    Suite { name: "cluster_limit", anchor: structure::CLUSTER_ANCHOR, defaults: cluster_defaults, runner: cluster_limit },
    Suite { name: "seminorm", anchor: "monotonicity of sector seminorms", defaults: seminorm_defaults, runner: seminorm },
    Suite { name: "dyson", anchor: "Dyson expansion of the interaction cocycle", defaults: dyson_defaults, runner: dyson },
    Suite { name: "coherence", anchor: structure::COHERENCE_ANCHOR, defaults: coherence_defaults, runner: coherence },
    Suite {
        name: "asymptotic_commutator",
        anchor: dynamics::COMMUTATOR_ANCHOR,
        defaults: commutator_defaults,
        runner: commutator,
    },
    Suite { name: "mehler", anchor: "closed-form kernel of the trapped propagator", defaults: mehler_defaults, runner: mehler },
    Suite { name: "trap_removal", anchor: dynamics::TRAP_ANCHOR, defaults: trap_defaults, runner: trap },
    Suite {
        name: "averaged_potential",
        anchor: "time-averaged interaction at high relative momentum",
        defaults: averaged_defaults,
        runner: averaged,
    },
    Suite { name: "renormalize", anchor: thermo::RENORMALIZE_ANCHOR, defaults: renormalize_defaults, runner: renormalize },
    Suite { name: "kms", anchor: thermo::GIBBS_ANCHOR, defaults: kms_defaults, runner: kms },
    Suite { name: "golden_thompson", anchor: thermo::GOLDEN_THOMPSON_ANCHOR, defaults: golden_defaults, runner: golden },
    Suite { name: "condensate", anchor: thermo::CONDENSATE_ANCHOR, defaults: condensate_defaults, runner: condensate },
    Suite {
        name: "free_asymptotic",
        anchor: "free asymptotic observables and the sensitivity function",
        defaults: free_asymptotic_defaults,
        runner: free_asymptotic,
    },
];

pub fn find(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

/// Runs a suite with its own defaults.
pub fn run_default(name: &str) -> Result<Vec<CheckReport>> {
    let s = find(name).ok_or_else(|| Error::InvalidArgument(format!("unknown suite {name}")))?;
    Ok(s.run(&(s.defaults)()))
}

fn random_wave(grid: &Grid, rng: &mut ChaCha8Rng) -> Result<WaveFn> {
    let amps = (0..grid.d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    WaveFn::new(*grid, amps)?.normalized()
}

/// Gauge average of a product of two resolvents with random window functions.
pub fn window_monomial(window: &[usize], nmax: usize, seed: u64) -> Result<LocalOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wg = Grid::periodic(window.len(), 1.0)?;
    let wb = fock::enumerate_basis(window.len(), nmax)?;
    let mut factors = Vec::new();
    for _ in 0..2 {
        let f = random_wave(&wg, &mut rng)?;
        let lambda = rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        factors.push((lambda, f));
    }
    LocalOperator::new(window.to_vec(), gauge_average(&monomial(&wb, &ResolventSpec::new(factors)?)?))
}

/// Norm of the leading `k × k` corner, i.e. of the restriction to sectors below `nmax`.
fn corner_norm(m: &CMatrix, k: usize) -> f64 {
    numkit::operator_norm(&m.submatrix(0, 0, k, k))
}

fn ccr_defaults() -> Settings {
    Settings::on(6, 0.5, true, 3)
}

fn ccr(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(1)?;
    let b = s.basis()?;
    let mut rng = s.rng();
    let (f, g) = (random_wave(&s.grid, &mut rng)?, random_wave(&s.grid, &mut rng)?);
    let k = b.sector_offset(s.nmax);
    let comm = fock::annihilation(&b, &f)?.commutator(&fock::creation(&b, &g)?);
    let want = FullOperator::identity(&b)?.scale(f.inner(&g));
    let r1 = corner_norm(&comm.sub(&want).matrix, k);
    let phi = fock::field(&b, &f)?;
    let phi_i = fock::field(&b, &f.scale(C64::new(0.0, 1.0)))?;
    let lhs = phi.mul(&phi).add(&phi_i.mul(&phi_i));
    let af = fock::annihilation(&b, &f)?;
    let rhs = af.adjoint().mul(&af).scale(C64::new(4.0, 0.0)).add(&FullOperator::identity(&b)?.scale(f.inner(&f) * 2.0));
    let r2 = corner_norm(&lhs.sub(&rhs).matrix, k);
    let anchor = "canonical commutation relations";
    Ok(vec![
        CheckReport::upper("ccr_commutator", anchor, r1, 0.0, 1e-12).with_param("d", s.grid.d).with_param("nmax", s.nmax).timed(start),
        CheckReport::upper("ccr_field_identity", anchor, r2, 0.0, 1e-10).with_param("d", s.grid.d).with_param("nmax", s.nmax).timed(start),
    ])
}

fn resolvent_defaults() -> Settings {
    Settings::on(4, 0.5, true, 3)
}

fn resolvent_suite(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let anchor = "resolvent identities and gauge covariance";
    let b = s.basis()?;
    let mut rng = s.rng();
    let (f, g) = (random_wave(&s.grid, &mut rng)?, random_wave(&s.grid, &mut rng)?);
    let lambdas = [0.7, -1.3, 2.1];
    let phi = fock::field(&b, &f)?;
    let id = FullOperator::identity(&b)?;
    let rs = lambdas.iter().map(|&l| resolvent(&b, l, &f)).collect::<Result<Vec<_>>>()?;
    let (mut inv, mut adj, mut first, mut gauge) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, (&l, r)) in lambdas.iter().zip(&rs).enumerate() {
        let shifted = phi.add(&id.scale(C64::new(0.0, l)));
        inv = inv.max(shifted.mul(r).sub(&id).norm());
        adj = adj.max(r.adjoint().sub(&resolvent(&b, -l, &f)?).norm());
        for (&m, rm) in lambdas.iter().zip(&rs).skip(i + 1) {
            let rhs = r.mul(rm).scale(C64::new(0.0, m - l));
            first = first.max(r.sub(rm).sub(&rhs).norm());
        }
        for t in [0.3, 1.7] {
            let u = fock::gauge_unitary(&b, t)?;
            let rotated = resolvent(&b, l, &f.scale(C64::from_polar(1.0, t)))?;
            gauge = gauge.max(rotated.sub(&u.mul(r).mul(&u.adjoint())).norm());
        }
    }
    // [R(λ,f), a*(g)] = −⟨f,g⟩R(λ,f)² on the vacuum; exact only without the cutoff
    let r = resolvent(&b, 2.0, &f)?;
    let c = r.commutator(&fock::creation(&b, &g)?).sub(&r.mul(&r).scale(-f.inner(&g)));
    let trend = numkit::vec_norm(&c.apply(&b.embed_sector_vector(0, &[ONE])));
    let p = |r: CheckReport| r.with_param("d", s.grid.d).with_param("nmax", s.nmax).timed(start);
    Ok(vec![
        p(CheckReport::upper("resolvent_inverse", anchor, inv, 0.0, 1e-10)),
        p(CheckReport::upper("resolvent_adjoint", anchor, adj, 0.0, 1e-10)),
        p(CheckReport::upper("resolvent_first_identity", anchor, first, 0.0, 1e-10)),
        p(CheckReport::upper("resolvent_gauge_covariance", anchor, gauge, 0.0, 1e-10)),
        p(CheckReport::metric("resolvent_creation_commutator", anchor, trend).with_note("cutoff-limited; decreases with nmax")),
    ])
}

fn matrix_units_defaults() -> Settings {
    Settings::on(3, 1.0, true, 3)
}

fn matrix_units(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let anchor = "matrix units from resolvent-built operators";
    s.need_nmax(1)?;
    let b = s.basis()?;
    let d = s.grid.d;
    let mut single = 0.0f64;
    for n in 1..=s.nmax {
        for i in 0..d {
            for k in 0..d {
                let w = matrix_unit(&b, i, k, n)?.block(n, n);
                let want = fock::symmetric_embed(&b, &EmbedInput::Factors(vec![fock::one_body_unit(d, i, k)]), n)?;
                single = single.max(numkit::operator_norm(&(&w - &want.block)));
            }
        }
    }
    let mut composite = 0.0f64;
    let mut count = 0usize;
    for n in 2..=s.nmax {
        for i1 in 0..d {
            for i2 in 0..d {
                for k1 in 0..d {
                    for k2 in 0..d {
                        let w = match matrix_unit_composite(&b, &[i1, i2], &[k1, k2], n) {
                            Ok(w) => w.block(n, n),
                            Err(Error::RankDeficient { residual, .. }) => {
                                composite = composite.max(residual.max(f64::MIN_POSITIVE));
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        let factors = vec![fock::one_body_unit(d, i1, k1), fock::one_body_unit(d, i2, k2)];
                        let want = fock::symmetric_embed(&b, &EmbedInput::Factors(factors), n)?;
                        composite = composite.max(numkit::operator_norm(&(&w - &want.block)));
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(vec![
        CheckReport::upper("matrix_unit", anchor, single, 0.0, 1e-9).with_param("d", d).with_param("nmax", s.nmax).timed(start),
        CheckReport::upper("matrix_unit_composite", anchor, composite, 0.0, 1e-9)
            .with_param("d", d)
            .with_param("nmax", s.nmax)
            .with_param("fits", count)
            .timed(start),
    ])
}

fn cluster_defaults() -> Settings {
    Settings::on(16, 0.5, true, 3)
}

/// Packets next to a three-site window at `d/4`, compactly supported within two cells.
fn cluster_packets(grid: &Grid, n: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<WaveFn>, Vec<WaveFn>)> {
    let j0 = grid.d / 4;
    let window = vec![j0 - 1, j0, j0 + 1];
    let radius = 2.0 * grid.h;
    let mut fs = Vec::new();
    let mut gs = Vec::new();
    for k in 0..n {
        let c = grid.x(j0) + (k as f64 - 0.5) * grid.h;
        fs.push(wave_packet(grid, c, grid.h, rng.gen_range(-0.5..0.5), Some(radius))?);
        gs.push(wave_packet(grid, c + 0.5 * grid.h, grid.h, rng.gen_range(-0.5..0.5), Some(radius))?);
    }
    Ok((window, fs, gs))
}

/// `c0 + dΓ(C1) + (dΓ(P)dΓ(Q) − dΓ(PQ))` on a small space against its grading.
fn kappa_grading_gap(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let b = fock::enumerate_basis(d, 3)?;
    let one_body = |c: &CMatrix| -> Result<FullOperator> {
        let mut out = FullOperator::zeros(&b)?;
        for i in 0..d {
            for j in 0..d {
                let ai = fock::creation_mode(&b, i)?;
                let aj = fock::creation_mode(&b, j)?.adjoint();
                out = out.add(&ai.mul(&aj).scale(c[(i, j)]));
            }
        }
        Ok(out)
    };
    let c1 = numkit::random_matrix(d, d, &mut rng);
    let (p, q) = (numkit::random_matrix(d, d, &mut rng), numkit::random_matrix(d, d, &mut rng));
    let pair = one_body(&p)?.mul(&one_body(&q)?).sub(&one_body(&p.matmul(&q))?);
    let c0 = C64::new(0.7, -0.2);
    let a = FullOperator::identity(&b)?.scale(c0).add(&one_body(&c1)?).add(&pair);
    let mut gap = 0.0f64;
    for n in 2..=3 {
        let nf = n as f64;
        let g = GradedOperator::new(
            n,
            vec![
                GradedTerm { weight: c0, op: EmbedInput::Factors(vec![]) },
                GradedTerm { weight: C64::new(nf, 0.0), op: EmbedInput::Factors(vec![c1.clone()]) },
                GradedTerm { weight: C64::new(nf * (nf - 1.0), 0.0), op: EmbedInput::Factors(vec![p.clone(), q.clone()]) },
            ],
        )?;
        let k = kappa(&g).materialize(&b)?;
        gap = gap.max(k.block.max_abs_diff(&structure::restrict(&a, n - 1)?.block));
    }
    Ok(gap)
}

fn cluster_limit(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(2)?;
    if !s.grid.periodic || s.grid.d < 12 {
        return Err(Error::InvalidArgument("cluster suite needs a periodic grid of at least 12 sites".into()));
    }
    let b = s.basis()?;
    let mut rng = s.rng();
    let mut out = Vec::new();
    for n in 2..=s.nmax.min(3) {
        let (window, fs, gs) = cluster_packets(&s.grid, n, &mut rng)?;
        let cv = ClusterVectors::new(fs, gs, (s.grid.d / 2) as i64)?;
        let mut worst: Option<CheckReport> = None;
        for k in 0..3 {
            let a = window_monomial(&window, s.nmax, s.seed + 100 * n as u64 + k)?;
            let r = cluster_limit_check(&a, &b, &cv, 1e-10)?;
            if worst.as_ref().is_none_or(|w| r.value > w.value) {
                worst = Some(r);
            }
        }
        if let Some(r) = worst {
            out.push(r.with_param("d", s.grid.d).with_param("operators", 3).timed(start));
        }
    }
    let kg = kappa_grading_gap(s.seed)?;
    out.push(CheckReport::upper("kappa_grading", structure::CLUSTER_ANCHOR, kg, 0.0, 1e-9).timed(start));
    Ok(out)
}

fn seminorm_defaults() -> Settings {
    Settings::on(6, 0.5, true, 3)
}

fn seminorm(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(1)?;
    let b = s.basis()?;
    let d = s.grid.d;
    if d < 3 {
        return Err(Error::InvalidArgument("seminorm suite needs at least 3 sites".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let count = 20;
    for k in 0..count {
        let j = k % (d - 2);
        let window: Vec<usize> = if k % 2 == 0 { vec![j, j + 1] } else { vec![j, j + 1, j + 2] };
        let a = window_monomial(&window, s.nmax, s.seed + k as u64)?;
        let norms = (0..=s.nmax).map(|n| structure::local_seminorm(&a, &b, n)).collect::<Result<Vec<_>>>()?;
        for w in norms.windows(2) {
            worst = worst.max(w[0] - w[1]);
        }
    }
    Ok(vec![CheckReport::upper("seminorm_monotone", "monotonicity of sector seminorms", worst, 0.0, 1e-10)
        .with_param("operators", count)
        .with_param("nmax", s.nmax)
        .timed(start)])
}

fn dyson_defaults() -> Settings {
    Settings::on(6, 0.6, true, 2).with_potential(Potential::Squarewell { depth: 1.0, radius: 0.6 }).with_times(&[0.1, 0.25, 0.5])
}

fn dyson(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(2)?;
    let spec = s.spec()?;
    let b = s.basis()?;
    let n = 2;
    let mut rng = s.rng();
    let mut series = Series::new("dyson_certificate", &["t", "order", "residual", "allowance"]);
    let mut worst = 0.0f64;
    let mut tv = 0.0f64;
    for &t in &s.times {
        let c = SectorOperator { n, block: numkit::random_hermitian(b.sector_dim(n), &mut rng) };
        let exact = exact_cocycle(&spec, &b, n, &c, t)?;
        let r = dyson_cocycle(&spec, &b, n, &c, t, s.dyson_order, s.quad_tol * c.norm())?;
        tv = tv.max(t.abs() * r.v_norm);
        for order in 0..=s.dyson_order {
            let res = numkit::operator_norm(&(&r.partial_sum(order).block - &exact.block));
            let allowance = r.tail(order) + 10.0 * QUAD_TOL_REL * r.c_norm;
            worst = worst.max(res / allowance);
            series.push(vec![t, order as f64, res, allowance]);
        }
    }
    let mut rep = CheckReport::upper("dyson_certificate", "Dyson expansion of the interaction cocycle", worst, 1.0, 0.0)
        .with_param("n", n)
        .with_param("order", s.dyson_order)
        .with_param("quad_tol", s.quad_tol)
        .with_param("max_t_v_norm", tv)
        .with_series(series);
    if tv > 1.0 {
        rep = rep.with_note("some t‖V_n‖ exceed 1");
    }
    Ok(vec![rep.timed(start)])
}

fn coherence_defaults() -> Settings {
    Settings::on(32, 0.5, true, 3).with_potential(Potential::Squarewell { depth: 1.0, radius: 0.5 }).with_times(&[0.25, 0.5])
}

fn coherence(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(2)?;
    if !s.grid.periodic || s.grid.d < 16 {
        return Err(Error::InvalidArgument("coherence suite needs a periodic grid of at least 16 sites".into()));
    }
    let spec = s.spec()?;
    let b = s.basis()?;
    let dynm = SectorDynamics::new(spec, b)?;
    let mut rng = s.rng();
    let distances: Vec<i64> = [4, 8, 16].into_iter().filter(|&x| x <= (s.grid.d / 2) as i64).collect();
    let mut out = Vec::new();
    for n in 2..=s.nmax.min(3) {
        let (window, fs, gs) = cluster_packets(&s.grid, n, &mut rng)?;
        let cv = ClusterVectors::new(fs, gs, 0)?;
        let a = window_monomial(&window[..2], s.nmax, s.seed + n as u64)?;
        for &t in &s.times {
            out.push(coherence_check(&a, &dynm, t, &cv, &distances, 1e-3)?.with_param("d", s.grid.d).timed(start));
        }
    }
    Ok(out)
}

fn commutator_defaults() -> Settings {
    Settings::on(40, 0.5, true, 2).with_potential(Potential::Squarewell { depth: 1.0, radius: 0.5 }).with_times(&[0.4])
}

fn commutator(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(1)?;
    if !s.grid.periodic || s.grid.d < 34 {
        return Err(Error::InvalidArgument("commutator suite needs a periodic grid of at least 34 sites".into()));
    }
    let t = s.first_time()?;
    let dynm = SectorDynamics::new(s.spec()?, s.basis()?)?;
    let a = window_monomial(&[0, 1], s.nmax, s.seed)?;
    let b = window_monomial(&[0, 1], s.nmax, s.seed + 1)?;
    let series = asymptotic_commutator(&dynm, &a, &b, t, &[4, 8, 16], s.nmax)?;
    let norms = series.column("norm").unwrap_or_default();
    let ok = if t == 0.0 { norms.iter().all(|&x| x <= 1e-12) } else { strictly_decreasing(&norms) };
    Ok(vec![CheckReport::predicate("asymptotic_commutator", dynamics::COMMUTATOR_ANCHOR, ok)
        .with_param("t", t)
        .with_param("n", s.nmax)
        .with_param("final_norm", norms.last().copied().unwrap_or(f64::NAN))
        .with_series(series)
        .timed(start)])
}

fn mehler_defaults() -> Settings {
    Settings::on(64, 0.125, false, 1).with_trap(Trap::Finite(2.0)).with_times(&[0.3])
}

fn mehler(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let anchor = "closed-form kernel of the trapped propagator";
    let Trap::Finite(l) = s.trap else {
        return Err(Error::InvalidArgument("kernel comparison needs a finite trap".into()));
    };
    let tau = s.first_time()?;
    let coarse = mehler_grid_comparison(l, tau, s.grid.d, s.grid.h)?;
    let fine = mehler_grid_comparison(l, tau, 2 * s.grid.d, s.grid.h / 2.0)?;
    let mut series = Series::new("mehler_gap", &["d", "h", "gap"]);
    series.push(vec![coarse.d as f64, coarse.h, coarse.gap]);
    series.push(vec![fine.d as f64, fine.h, fine.gap]);
    Ok(vec![
        CheckReport::upper("mehler_gap", anchor, coarse.gap, 5e-2, 0.0).with_param("L", l).with_param("tau", tau).timed(start),
        CheckReport::upper("mehler_refinement", anchor, fine.gap / coarse.gap, 0.5, 0.0).with_series(series).timed(start),
    ])
}

fn trap_defaults() -> Settings {
    Settings::on(8, 0.5, true, 2).with_potential(Potential::Gaussian { amplitude: 1.0, range: 0.5 })
}

fn trap(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    s.need_nmax(1)?;
    let t = s.first_time()?;
    let spec = s.spec()?.with_trap(Trap::Infinite);
    let b = fock::enumerate_basis(s.grid.d, s.nmax)?;
    let mut rng = s.rng();
    let block = numkit::random_hermitian(b.sector_dim(s.nmax), &mut rng);
    let a = SectorOperator { n: s.nmax, block: block.scale_real(1.0 / numkit::operator_norm(&block)) };
    match s.trap {
        Trap::Infinite => Ok(vec![trap_removal(&spec, &a, t, &[2.0, 4.0, 8.0, 16.0])?]),
        Trap::Finite(l) => {
            let r = trap_removal(&spec, &a, t, &[l])?;
            let gap = r.series[0].rows[0][1];
            Ok(vec![CheckReport::metric("trap_gap", dynamics::TRAP_ANCHOR, gap).with_param("L", l).with_param("t", t).timed(start)])
        }
    }
}

fn averaged_defaults() -> Settings {
    Settings::on(64, 0.25, true, 2).with_potential(Potential::Gaussian { amplitude: 1.0, range: 0.5 }).with_times(&[1.0])
}

fn averaged(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let t = s.first_time()?;
    let h = s.grid.h;
    let cutoffs = [PI / (4.0 * h), PI / (2.0 * h), 3.0 * PI / (4.0 * h)];
    let series = averaged_potential_profile(&s.grid, &s.potential, s.trap, t, &cutoffs, 64)?;
    let last = series.rows.last().map(|r| if r[2] > 0.0 { r[1] / r[2] } else { 0.0 }).unwrap_or(f64::NAN);
    Ok(vec![CheckReport::metric("averaged_potential", "time-averaged interaction at high relative momentum", last)
        .with_param("t", t)
        .with_note("ratio of averaged to instantaneous norm at the highest cutoff")
        .with_series(series)
        .timed(start)])
}

fn renormalize_defaults() -> Settings {
    Settings::on(8, 0.5, true, 2).with_potential(Potential::Squarewell { depth: 2.0, radius: 0.5 })
}

fn renormalize(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let spec = s.spec()?;
    let b = s.basis()?;
    let mut out = thermo::renormalization_check(&spec, &b)?;
    if s.grid.periodic {
        let pt = thermo::positive_type_check(&s.grid, &spec.pair)?;
        out.push(CheckReport::metric("positive_type", thermo::RENORMALIZE_ANCHOR, pt.min).with_param("accepted", pt.accepted).timed(start));
        if pt.accepted {
            let floor = thermo::positive_type_energy_floor(&spec, &b)?;
            out.push(CheckReport::lower("positive_type_floor", thermo::RENORMALIZE_ANCHOR, floor, 0.0, thermo::POSITIVITY_TOL).timed(start));
        }
    }
    Ok(out)
}

fn kms_defaults() -> Settings {
    Settings::on(4, 0.5, true, 3)
        .with_potential(Potential::Gaussian { amplitude: 1.0, range: 0.5 })
        .with_trap(Trap::Finite(1.5))
        .with_times(&[0.0, 0.5])
}

fn chemical_potential(s: &Settings, spec: &HamiltonianSpec) -> f64 {
    s.mu.unwrap_or(-spec.pair.v0() - 0.1)
}

fn kms(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let spec = s.spec()?;
    let Trap::Finite(l) = spec.trap else {
        return Err(Error::InvalidArgument("Gibbs states need a finite trap".into()));
    };
    let b = s.basis()?;
    let mu = chemical_potential(s, &spec);
    let mut out = Vec::new();
    for &beta in &s.betas {
        let gs = thermo::gibbs_state(&spec, &b, beta, mu, s.allow_mu_override)?;
        out.extend(thermo::kms_check(&gs, &s.times, 0.1, s.seed)?);
    }
    let sweep = thermo::gibbs_sweep(&spec, &b, &s.betas, mu, s.allow_mu_override)?;
    let beta = s.betas.first().copied().unwrap_or(1.0);
    let t = s.times.last().copied().unwrap_or(0.5);
    let trend = thermo::kms_trend(&spec, &b, beta, mu, &[l, 2.0 * l, 4.0 * l, 8.0 * l], t, s.seed)?;
    let last = trend.rows.last().map(|r| r[1]).unwrap_or(f64::NAN);
    out.push(
        CheckReport::metric("kms_untrapped_trend", thermo::GIBBS_ANCHOR, last)
            .with_note("trapped Gibbs states under the untrapped dynamics; reported only")
            .with_series(trend)
            .with_series(sweep)
            .timed(start),
    );
    Ok(out)
}

fn golden_defaults() -> Settings {
    Settings::on(6, 0.5, true, 2).with_potential(Potential::Gaussian { amplitude: 1.0, range: 0.5 }).with_trap(Trap::Finite(2.0))
}

fn golden(s: &Settings) -> Result<Vec<CheckReport>> {
    let spec = s.spec()?;
    let b = s.basis()?;
    s.betas.iter().map(|&beta| thermo::golden_thompson_check(&spec, &b, beta)).collect()
}

fn condensate_defaults() -> Settings {
    Settings::on(64, 0.25, false, 2)
}

fn gaussian_profile(x: f64) -> f64 {
    (-x * x / 2.0).exp()
}

fn condensate(s: &Settings) -> Result<Vec<CheckReport>> {
    s.need_nmax(1)?;
    let b = FockBasis::with_budget(s.grid.d, s.nmax, s.memory_budget)?;
    thermo::condensate_check(&b, &s.grid, &gaussian_profile, &[0.5, 1.0, 2.0], s.nmax)
}

fn free_asymptotic_defaults() -> Settings {
    Settings::on(128, 1.0, true, 1).with_times(&[8.0, 16.0, 32.0])
}

fn free_asymptotic(s: &Settings) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let anchor = "free asymptotic observables and the sensitivity function";
    let g = s.grid;
    let d = g.d;
    let mut a0 = CMatrix::zeros(d, d);
    for j in d / 2 - 1..=d / 2 + 1 {
        a0[(j, j)] = ONE;
    }
    let width = 4.0 * g.h;
    let psi = wave_packet(&g, 0.0, width, PI / (16.0 * g.h), None)?;
    let cs = fit_sensitivity_constant(&a0, &psi)?;
    let profile = |v: f64| (-(v - 0.4).powi(2) / (2.0 * 0.3f64.powi(2))).exp();
    let mut series = Series::new("free_asymptotic", &["t", "lhs", "rhs", "relative_gap"]);
    for &t in &s.times {
        let v = free_asymptotic_observable(&a0, &profile, t, &psi, SENSITIVITY_CONSTANT)?;
        series.push(vec![t, v.lhs, v.rhs, v.relative_gap]);
    }
    let gaps = series.column("relative_gap").unwrap_or_default();
    let mut r = CheckReport::upper("free_asymptotic", anchor, gaps.last().copied().unwrap_or(f64::NAN), 0.05, 0.0);
    if !strictly_decreasing(&gaps) {
        r.pass = false;
        r.note = Some("relative gap not strictly decreasing in t".into());
    }
    Ok(vec![
        r.with_param("d", d).with_series(series).timed(start),
        CheckReport::upper("sensitivity_constant", anchor, (cs - SENSITIVITY_CONSTANT).abs(), 0.0, 1e-10).timed(start),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_unique_and_ordered() {
        let names: Vec<&str> = SUITES.iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(find("kms").is_some());
        assert!(find("nope").is_none());
        assert!(run_default("nope").is_err());
    }

    #[test]
    fn errors_become_failed_reports() {
        let s = find("ccr").unwrap();
        let mut cfg = (s.defaults)();
        cfg.nmax = 0;
        let r = s.run(&cfg);
        assert_eq!(r.len(), 1);
        assert!(!r[0].pass && r[0].note.is_some());
    }

    #[test]
    fn budget_violation_is_skipped() {
        let s = find("ccr").unwrap();
        let mut cfg = (s.defaults)();
        cfg.memory_budget = 1024;
        let r = s.run(&cfg);
        assert!(r[0].skipped, "{r:?}");
    }
}
