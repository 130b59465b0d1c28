//! Event-driven simulation of the sped-up random walk and of the exclusion
//! process on a finite window.
//!
//! Time is physical: every rate already carries the factor `N^{1+1/α}`.
//! Window edges reflect, as in [`crate::walk`]: the bonds leaving the window
//! are simply absent.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::env::{Environment, Window};
use crate::lattice::{pairwise_sum, LatticeFunction};
use crate::rate_tree::RateTree;
use crate::rng::{exponential, uniform_open};
use crate::{Error, Result};

/// Occupation variables on a window, with an optional tagged particle.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParticleConfig {
    window: Window,
    occupancy: Vec<bool>,
    tagged: Option<i64>,
}

impl ParticleConfig {
    pub fn new(window: Window, occupancy: Vec<bool>, tagged: Option<i64>) -> Result<Self> {
        if occupancy.len() != window.sites() {
            return Err(Error::WindowMismatch);
        }
        if let Some(x) = tagged {
            if !occupancy[window.index(x)?] {
                return Err(Error::MissingTag);
            }
        }
        Ok(Self {
            window,
            occupancy,
            tagged,
        })
    }

    pub fn empty(window: Window) -> Self {
        Self {
            window,
            occupancy: alloc::vec![false; window.sites()],
            tagged: None,
        }
    }

    pub fn full(window: Window) -> Self {
        Self {
            window,
            occupancy: alloc::vec![true; window.sites()],
            tagged: None,
        }
    }

    /// Particles at the listed sites.
    pub fn from_sites(window: Window, sites: &[i64], tagged: Option<i64>) -> Result<Self> {
        let mut occupancy = alloc::vec![false; window.sites()];
        for &x in sites {
            occupancy[window.index(x)?] = true;
        }
        Self::new(window, occupancy, tagged)
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn tagged(&self) -> Option<i64> {
        self.tagged
    }

    pub fn with_tag(mut self, site: i64) -> Result<Self> {
        if !self.occupancy[self.window.index(site)?] {
            return Err(Error::MissingTag);
        }
        self.tagged = Some(site);
        Ok(self)
    }

    pub fn is_occupied(&self, x: i64) -> bool {
        self.window.contains(x) && self.occupancy[(x - self.window.lo) as usize]
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|b| **b).count()
    }

    /// Occupied sites in increasing order.
    pub fn positions(&self) -> Vec<i64> {
        self.window.iter().zip(&self.occupancy).filter(|(_, b)| **b).map(|(x, _)| x).collect()
    }
}

/// Trajectory of a single walker: it sits at `positions[i]` during
/// `[times[i], times[i+1])`, and at the last position until `t_max`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WalkPath {
    pub times: Vec<f64>,
    pub positions: Vec<i64>,
    pub t_max: f64,
}

impl WalkPath {
    pub fn start(&self) -> i64 {
        self.positions[0]
    }

    pub fn end(&self) -> i64 {
        *self.positions.last().unwrap()
    }

    /// Number of jumps.
    pub fn jumps(&self) -> usize {
        self.positions.len() - 1
    }

    /// Position at time `t` (right-continuous).
    pub fn position_at(&self, t: f64) -> i64 {
        let i = self.times.partition_point(|s| *s <= t);
        self.positions[i.saturating_sub(1)]
    }
}

/// Exact simulation of the sped-up walk from `x0` up to `t_max`: at site `x`
/// hold for an exponential time of rate `N^{1+1/α}(c_x + c_{x-1})`, then
/// jump right with probability `c_x / (c_x + c_{x-1})`. Each step consumes
/// one exponential and one uniform draw.
pub fn simulate_walk<R: RngCore + ?Sized>(env: &Environment, x0: i64, t_max: f64, rng: &mut R) -> Result<WalkPath> {
    let w = env.window();
    let mut i = w.index(x0)?;
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidTimes);
    }
    let c = env.conductances();
    let speed = env.speed();
    let last = w.sites() - 1;
    let mut times = alloc::vec![0.0];
    let mut positions = alloc::vec![x0];
    let mut t = 0.0;
    loop {
        let left = if i > 0 { c[i - 1] } else { 0.0 };
        let right = if i < last { c[i] } else { 0.0 };
        let total = left + right;
        t += exponential(rng) / (speed * total);
        if t > t_max {
            break;
        }
        if uniform_open(rng) * total < right {
            i += 1;
        } else {
            i -= 1;
        }
        times.push(t);
        positions.push(w.site(i));
    }
    Ok(WalkPath { times, positions, t_max })
}

/// Product Bernoulli configuration with `P(η(x) = 1) = ρ₀(x/N)`. One uniform
/// draw per site in window order; with `condition_origin` the origin is then
/// forced occupied and tagged.
pub fn sample_initial<R: RngCore + ?Sized>(
    profile: &LatticeFunction,
    rng: &mut R,
    condition_origin: bool,
) -> Result<ParticleConfig> {
    let w = profile.window;
    for (x, &v) in w.iter().zip(&profile.values) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::ProfileOutOfRange { site: x, value: v });
        }
    }
    let mut occupancy: Vec<bool> = profile.values.iter().map(|&p| uniform_open(rng) < p).collect();
    let mut tagged = None;
    if condition_origin {
        occupancy[w.index(0)?] = true;
        tagged = Some(0);
    }
    ParticleConfig::new(w, occupancy, tagged)
}

/// `⟨π^N, H⟩ = (1/N) Σ_x H(x/N) η(x)`.
pub fn empirical_measure(config: &ParticleConfig, h: &LatticeFunction) -> Result<f64> {
    if config.window != h.window {
        return Err(Error::WindowMismatch);
    }
    let terms: Vec<f64> = h
        .values
        .iter()
        .zip(&config.occupancy)
        .map(|(v, &b)| if b { *v } else { 0.0 })
        .collect();
    Ok(pairwise_sum(&terms) / h.n as f64)
}

/// Values of `⟨π^N_t, H⟩` at the sample times, one row per observable.
/// `replica` and `seed` label where the randomness came from; simulators
/// leave them at zero and drivers fill them in.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Tagged site at each sample time; empty without a tag.
    pub tagged: Vec<i64>,
    pub replica: u64,
    pub seed: u64,
}

/// Configuration at a sample time.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Snapshot {
    pub time: f64,
    pub config: ParticleConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExclusionOptions {
    /// Keep a full configuration at every sample time.
    pub snapshots: bool,
    /// Width of the boundary strip watched by the guard; 0 disables it.
    pub guard_sites: usize,
}

impl Default for ExclusionOptions {
    fn default() -> Self {
        Self {
            snapshots: false,
            guard_sites: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExclusionRun {
    pub series: ObservableSeries,
    pub snapshots: Vec<Snapshot>,
    /// Exchanges performed (every event of the active-bond sampler).
    pub events: u64,
    /// Events after which the particle count differed from the initial one.
    pub conservation_violations: u64,
    /// Some particle was within `guard_sites` of a window edge at some time.
    pub reached_boundary: bool,
    pub final_config: ParticleConfig,
}

fn check_run_inputs(
    env: &Environment,
    eta0: &ParticleConfig,
    t_max: f64,
    observables: &[LatticeFunction],
    sample_times: &[f64],
) -> Result<()> {
    if eta0.window != env.window() {
        return Err(Error::WindowMismatch);
    }
    for h in observables {
        h.compatible_with(env)?;
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidTimes);
    }
    let mut prev = f64::NEG_INFINITY;
    for &s in sample_times {
        if !(s >= 0.0 && s > prev) {
            return Err(Error::InvalidTimes);
        }
        if s > t_max {
            return Err(Error::SampleTimeBeyondHorizon { time: s, horizon: t_max });
        }
        prev = s;
    }
    Ok(())
}

struct Recorder<'a> {
    observables: &'a [LatticeFunction],
    series: ObservableSeries,
    snapshots: Vec<Snapshot>,
    keep_snapshots: bool,
}

impl<'a> Recorder<'a> {
    fn new(observables: &'a [LatticeFunction], keep_snapshots: bool) -> Self {
        Self {
            observables,
            series: ObservableSeries {
                times: Vec::new(),
                values: alloc::vec![Vec::new(); observables.len()],
                tagged: Vec::new(),
                replica: 0,
                seed: 0,
            },
            snapshots: Vec::new(),
            keep_snapshots,
        }
    }

    fn record(&mut self, time: f64, config: &ParticleConfig) {
        self.series.times.push(time);
        for (row, h) in self.series.values.iter_mut().zip(self.observables) {
            row.push(empirical_measure(config, h).expect("windows checked"));
        }
        if let Some(x) = config.tagged {
            self.series.tagged.push(x);
        }
        if self.keep_snapshots {
            self.snapshots.push(Snapshot {
                time,
                config: config.clone(),
            });
        }
    }
}

/// Exchanges the contents of sites `i` and `i + 1` (window indices); the tag
/// follows its particle, which only moves when the other site is vacant.
fn exchange(config: &mut ParticleConfig, i: usize) {
    let occ = &mut config.occupancy;
    if occ[i] == occ[i + 1] {
        return;
    }
    occ.swap(i, i + 1);
    if let Some(x) = config.tagged {
        let lo = config.window.site(i);
        if x == lo {
            config.tagged = Some(lo + 1);
        } else if x == lo + 1 {
            config.tagged = Some(lo);
        }
    }
}

fn near_edge(window: Window, i: usize, guard: usize) -> bool {
    guard > 0 && (i < guard || i + guard >= window.sites())
}

/// Exclusion process with bond `x` exchanging at rate `N^{1+1/α} c_x`,
/// simulated rejection-free: only bonds whose two sites differ carry rate,
/// and the next one to fire is drawn from a sum tree in `O(log B)`.
/// The law is that of the process where every bond fires and equal
/// occupancies make the exchange a no-op (see [`simulate_exclusion_naive`]).
pub fn simulate_exclusion<R: RngCore + ?Sized>(
    env: &Environment,
    eta0: &ParticleConfig,
    t_max: f64,
    observables: &[LatticeFunction],
    sample_times: &[f64],
    opts: &ExclusionOptions,
    rng: &mut R,
) -> Result<ExclusionRun> {
    check_run_inputs(env, eta0, t_max, observables, sample_times)?;
    let window = env.window();
    let speed = env.speed();
    let rates: Vec<f64> = env.conductances().iter().map(|c| speed * c).collect();
    let mut config = eta0.clone();
    let active = |occ: &[bool], b: usize| occ[b] != occ[b + 1];
    let initial: Vec<f64> = (0..rates.len())
        .map(|b| if active(&config.occupancy, b) { rates[b] } else { 0.0 })
        .collect();
    let mut tree = RateTree::new(&initial);
    let guard = opts.guard_sites;
    let mut reached_boundary = config
        .occupancy
        .iter()
        .enumerate()
        .any(|(i, &b)| b && near_edge(window, i, guard));
    let mut recorder = Recorder::new(observables, opts.snapshots);
    let mut next_sample = 0;
    let mut t = 0.0;
    let mut events = 0u64;
    let count0 = config.count();
    let mut conservation_violations = 0u64;
    loop {
        let total = tree.total();
        let t_next = if total > 0.0 { t + exponential(rng) / total } else { f64::INFINITY };
        while next_sample < sample_times.len() && sample_times[next_sample] < t_next {
            recorder.record(sample_times[next_sample], &config);
            if config.count() != count0 {
                conservation_violations += 1;
            }
            next_sample += 1;
        }
        if t_next > t_max {
            break;
        }
        t = t_next;
        let b = tree.find(uniform_open(rng) * total);
        let before = config.occupancy[b] as u8 + config.occupancy[b + 1] as u8;
        exchange(&mut config, b);
        let after = config.occupancy[b] as u8 + config.occupancy[b + 1] as u8;
        if before != after {
            conservation_violations += 1;
        }
        events += 1;
        // The pair still differs, so bond b stays active; its neighbours flip.
        if b > 0 {
            let r = if active(&config.occupancy, b - 1) { rates[b - 1] } else { 0.0 };
            tree.set(b - 1, r);
        }
        if b + 1 < rates.len() {
            let r = if active(&config.occupancy, b + 1) { rates[b + 1] } else { 0.0 };
            tree.set(b + 1, r);
        }
        if !reached_boundary {
            let landed = if config.occupancy[b] { b } else { b + 1 };
            reached_boundary = near_edge(window, landed, guard);
        }
    }
    Ok(ExclusionRun {
        series: recorder.series,
        snapshots: recorder.snapshots,
        events,
        conservation_violations,
        reached_boundary,
        final_config: config,
    })
}

/// Reference sampler: every bond fires at its full rate and exchanges with
/// equal occupancies are no-ops. Far slower than [`simulate_exclusion`]; kept
/// as an oracle for small windows.
pub fn simulate_exclusion_naive<R: RngCore + ?Sized>(
    env: &Environment,
    eta0: &ParticleConfig,
    t_max: f64,
    observables: &[LatticeFunction],
    sample_times: &[f64],
    rng: &mut R,
) -> Result<ObservableSeries> {
    check_run_inputs(env, eta0, t_max, observables, sample_times)?;
    let speed = env.speed();
    let rates: Vec<f64> = env.conductances().iter().map(|c| speed * c).collect();
    let total = pairwise_sum(&rates);
    let mut config = eta0.clone();
    let mut recorder = Recorder::new(observables, false);
    let mut next_sample = 0;
    let mut t = 0.0;
    loop {
        let t_next = t + exponential(rng) / total;
        while next_sample < sample_times.len() && sample_times[next_sample] < t_next {
            recorder.record(sample_times[next_sample], &config);
            next_sample += 1;
        }
        if t_next > t_max {
            break;
        }
        t = t_next;
        let mut target = uniform_open(rng) * total;
        let mut b = 0;
        while b + 1 < rates.len() && target >= rates[b] {
            target -= rates[b];
            b += 1;
        }
        exchange(&mut config, b);
    }
    Ok(recorder.series)
}

/// `(t, x_t/N)` for every snapshot.
pub fn tagged_position(snapshots: &[Snapshot], n: u64) -> Result<Vec<(f64, f64)>> {
    snapshots
        .iter()
        .map(|s| {
            s.config
                .tagged
                .map(|x| (s.time, x as f64 / n as f64))
                .ok_or(Error::MissingTag)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFamily;
    use crate::StableLaw;

    fn unit_env(lo: i64, hi: i64, n: u64) -> Environment {
        let law = StableLaw::new(0.5, 1.0).unwrap();
        Environment::unit_conductances(law, n, Window::new(lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn walk_with_zero_horizon_stays_put() {
        let e = unit_env(-5, 5, 2);
        let p = simulate_walk(&e, 3, 0.0, &mut StreamFamily::new(1).stream(0)).unwrap();
        assert_eq!(p.positions, [3]);
        assert_eq!(p.jumps(), 0);
        assert_eq!(p.position_at(10.0), 3);
        assert!(simulate_walk(&e, 6, 1.0, &mut StreamFamily::new(1).stream(0)).is_err());
    }

    #[test]
    fn walk_steps_are_nearest_neighbour_and_reflect() {
        let e = unit_env(0, 3, 1);
        let p = simulate_walk(&e, 0, 50.0, &mut StreamFamily::new(2).stream(0)).unwrap();
        assert!(p.jumps() > 10);
        assert!(p.positions.windows(2).all(|w| (w[0] - w[1]).abs() == 1));
        assert!(p.times.windows(2).all(|w| w[1] > w[0]));
        assert!(p.positions.iter().all(|x| (0..=3).contains(x)));
    }

    #[test]
    fn config_validation() {
        let w = Window::new(-2, 2).unwrap();
        assert_eq!(ParticleConfig::from_sites(w, &[0], Some(1)), Err(Error::MissingTag));
        let c = ParticleConfig::from_sites(w, &[-2, 1], Some(1)).unwrap();
        assert_eq!(c.positions(), [-2, 1]);
        assert_eq!(c.count(), 2);
        assert!(ParticleConfig::new(w, alloc::vec![true; 3], None).is_err());
    }

    #[test]
    fn empirical_measure_examples() {
        let w = Window::new(-4, 4).unwrap();
        let one = LatticeFunction::constant(w, 4, 1.0);
        let c = ParticleConfig::from_sites(w, &[0, 1], None).unwrap();
        assert_eq!(empirical_measure(&c, &one).unwrap(), 0.5);
        assert_eq!(empirical_measure(&ParticleConfig::empty(w), &one).unwrap(), 0.0);
    }

    #[test]
    fn initial_law_edges() {
        let w = Window::new(-3, 3).unwrap();
        let mut rng = StreamFamily::new(4).stream(0);
        let zero = LatticeFunction::zeros(w, 1);
        assert_eq!(sample_initial(&zero, &mut rng, false).unwrap().count(), 0);
        let tagged = sample_initial(&zero, &mut rng, true).unwrap();
        assert_eq!(tagged.positions(), [0]);
        assert_eq!(tagged.tagged(), Some(0));
        let full = sample_initial(&LatticeFunction::constant(w, 1, 1.0), &mut rng, false).unwrap();
        assert_eq!(full.count(), 7);
        let bad = LatticeFunction::constant(w, 1, 1.5);
        assert_eq!(
            sample_initial(&bad, &mut rng, false),
            Err(Error::ProfileOutOfRange { site: -3, value: 1.5 })
        );
    }

    #[test]
    fn tag_moves_only_into_vacancies() {
        let w = Window::new(0, 3).unwrap();
        let mut c = ParticleConfig::from_sites(w, &[1, 2], Some(1)).unwrap();
        exchange(&mut c, 1);
        assert_eq!(c.tagged(), Some(1));
        exchange(&mut c, 0);
        assert_eq!(c.tagged(), Some(0));
        assert_eq!(c.positions(), [0, 2]);
    }

    #[test]
    fn frozen_configurations() {
        let e = unit_env(-8, 8, 4);
        let w = e.window();
        let h = LatticeFunction::from_fn(w, 4, |u| u * u);
        for eta in [ParticleConfig::empty(w), ParticleConfig::full(w)] {
            let opts = ExclusionOptions {
                guard_sites: 0,
                ..Default::default()
            };
            let run = simulate_exclusion(&e, &eta, 1.0, std::slice::from_ref(&h), &[0.0, 0.5, 1.0], &opts, &mut StreamFamily::new(3).stream(0))
                .unwrap();
            assert_eq!(run.events, 0);
            assert_eq!(run.final_config, eta);
            let v = &run.series.values[0];
            assert!(v.iter().all(|x| *x == v[0]));
        }
    }

    #[test]
    fn run_input_errors() {
        let e = unit_env(-8, 8, 4);
        let eta = ParticleConfig::empty(e.window());
        let mut rng = StreamFamily::new(3).stream(0);
        let o = ExclusionOptions::default();
        assert_eq!(
            simulate_exclusion(&e, &eta, 1.0, &[], &[2.0], &o, &mut rng).unwrap_err(),
            Error::SampleTimeBeyondHorizon { time: 2.0, horizon: 1.0 }
        );
        let other = ParticleConfig::empty(Window::new(0, 3).unwrap());
        assert_eq!(
            simulate_exclusion(&e, &other, 1.0, &[], &[], &o, &mut rng).unwrap_err(),
            Error::WindowMismatch
        );
        assert_eq!(tagged_position(&[Snapshot { time: 0.0, config: eta }], 4), Err(Error::MissingTag));
    }
}
