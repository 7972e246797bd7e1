//! Classical point-particle motion through gravity and the trap potential.
//!
//! The integrator is velocity Verlet. Intensity noise enters as a
//! multiplicative factor (1 + epsilon) on the trap force, held constant
//! over a step.

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::noise::NoiseSeries;
use crate::params::{AtomSpecies, CavityQedParams, FortConfig};
use crate::physics::{free_fall_velocity, trap_frequencies, FortField};
use crate::vec3::Vec3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Falling,
    InMode,
    Trapped,
    Escaped,
    Lost,
}

impl Status {
    /// Allowed moves: falling -> in_mode -> trapped -> escaped, and any
    /// pre-trapped state -> lost. Nothing comes back.
    pub fn can_become(self, next: Status) -> bool {
        use Status::*;
        match (self, next) {
            (a, b) if a == b => true,
            (Falling, InMode | Trapped | Lost) => true,
            (InMode, Trapped | Lost) => true,
            (Trapped, Escaped) => true,
            _ => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Falling => "falling",
            Status::InMode => "in_mode",
            Status::Trapped => "trapped",
            Status::Escaped => "escaped",
            Status::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub time: f64,
    pub status: Status,
    /// Axial energy above the bottom of the local well, J.
    pub energy_axial: f64,
}

impl AtomState {
    pub fn new(position: Vec3, velocity: Vec3, time: f64, status: Status) -> Self {
        AtomState {
            position,
            velocity,
            time,
            status,
            energy_axial: 0.0,
        }
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        0.5 * mass * self.velocity.norm_sq()
    }

    fn set_status(&mut self, next: Status) {
        debug_assert!(self.status.can_become(next), "{:?} -> {next:?}", self.status);
        if self.status.can_become(next) {
            self.status = next;
        }
    }
}

/// Where atoms come from: a straight passage through the mode region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    /// Fall height above the mode for uncooled atoms, m.
    pub drop_height: f64,
    /// Mean speed after intracavity cooling, m/s.
    pub post_cooling_speed_mean: f64,
    /// Standard deviation of the cooled speed, m/s.
    pub speed_spread: f64,
    /// Radius of the disc of closest-approach points about the mode centre, m.
    pub disc_radius: f64,
    pub cooled: bool,
}

impl InitialDistribution {
    /// Speed whose kinetic energy is k_B * 30 uK for cesium, ~6.1 cm/s.
    pub fn cooled_speed(species: &AtomSpecies) -> f64 {
        (2.0 * BOLTZMANN * 30e-6 / species.mass).sqrt()
    }

    pub fn cooled(params: &CavityQedParams, species: &AtomSpecies) -> Self {
        let v = Self::cooled_speed(species);
        InitialDistribution {
            drop_height: 5e-3,
            post_cooling_speed_mean: v,
            speed_spread: 0.25 * v,
            disc_radius: params.waist,
            cooled: true,
        }
    }

    pub fn free_fall(params: &CavityQedParams) -> Self {
        InitialDistribution {
            drop_height: 5e-3,
            post_cooling_speed_mean: 0.0,
            speed_spread: 0.0,
            disc_radius: params.waist,
            cooled: false,
        }
    }

    pub fn validate(&self, params: &CavityQedParams) -> Result<()> {
        if !(self.drop_height >= 0.0) {
            return Err(Error::param("drop_height", "must be >= 0"));
        }
        if !(self.post_cooling_speed_mean >= 0.0 && self.speed_spread >= 0.0) {
            return Err(Error::param("post_cooling_speed_mean", "speeds must be >= 0"));
        }
        if !(self.disc_radius > 0.0 && self.disc_radius <= 5.0 * params.waist) {
            return Err(Error::param("disc_radius", "must be in (0, 5 w0]"));
        }
        if self.cooled && self.post_cooling_speed_mean == 0.0 {
            return Err(Error::param("post_cooling_speed_mean", "cooled atoms need a speed > 0"));
        }
        Ok(())
    }

    /// Speeds are drawn from a normal distribution truncated below at a
    /// fifth of the mean, so no atom hovers indefinitely.
    pub fn speed_floor(&self) -> f64 {
        0.2 * self.post_cooling_speed_mean
    }

    /// Draw one passage. Cooled atoms move in the plane transverse to the
    /// cavity axis with a uniformly random direction; uncooled atoms fall
    /// straight down at the free-fall speed.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        params: &CavityQedParams,
        species: &AtomSpecies,
        rng: &mut R,
    ) -> Passage {
        let (speed, theta) = if self.cooled {
            let normal = Normal::new(self.post_cooling_speed_mean, self.speed_spread.max(1e-12))
                .expect("finite spread");
            let floor = self.speed_floor();
            let speed = loop {
                let s: f64 = normal.sample(rng);
                if s >= floor {
                    break s;
                }
            };
            (speed, rng.random_range(0.0..2.0 * PI))
        } else {
            (free_fall_velocity(self.drop_height, species.gravity), -PI / 2.0)
        };
        let dir = Vec3::new(0.0, theta.cos(), theta.sin());
        let perp = Vec3::new(0.0, -theta.sin(), theta.cos());
        let l = params.cavity_length;
        let (u, b) = loop {
            let u = rng.random_range(-1.0..1.0) * self.disc_radius;
            let b = rng.random_range(-1.0..1.0) * self.disc_radius;
            let x = l / 2.0 + u;
            if u * u + b * b <= self.disc_radius * self.disc_radius && x > 0.0 && x < l {
                break (u, b);
            }
        };
        Passage {
            closest: Vec3::new(l / 2.0 + u, 0.0, 0.0) + perp * b,
            velocity: dir * speed,
        }
    }

    /// Mean time spent with rho < w0 by a passage, s (exact for straight
    /// paths, gravity neglected).
    pub fn mean_dwell(&self, params: &CavityQedParams, species: &AtomSpecies) -> f64 {
        let w0 = params.waist;
        let r0 = self.disc_radius;
        // E[chord] over b with the disc marginal density 2 sqrt(r0^2-b^2)/(pi r0^2)
        let n = 4000;
        let b_max = w0.min(r0);
        let mut chord = 0.0;
        for i in 0..n {
            let b = -b_max + (i as f64 + 0.5) * 2.0 * b_max / n as f64;
            let density = 2.0 * (r0 * r0 - b * b).max(0.0).sqrt() / (PI * r0 * r0);
            chord += 2.0 * (w0 * w0 - b * b).max(0.0).sqrt() * density * 2.0 * b_max / n as f64;
        }
        chord * self.mean_inverse_speed(species)
    }

    fn mean_inverse_speed(&self, species: &AtomSpecies) -> f64 {
        if !self.cooled {
            return 1.0 / free_fall_velocity(self.drop_height, species.gravity);
        }
        let mu = self.post_cooling_speed_mean;
        let sd = self.speed_spread.max(1e-12 * mu);
        let floor = self.speed_floor();
        let hi = mu + 10.0 * sd;
        let n = 20000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let s = floor + (i as f64 + 0.5) * (hi - floor) / n as f64;
            let w = (-0.5 * ((s - mu) / sd).powi(2)).exp();
            num += w / s;
            den += w;
        }
        num / den
    }
}

/// Straight passage: the point of closest approach to the mode axis and the
/// velocity there. Gravity bends it slightly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub closest: Vec3,
    pub velocity: Vec3,
}

impl Passage {
    /// Ballistic state `tau` seconds after closest approach.
    #[inline]
    pub fn at(&self, tau: f64, gravity: f64) -> (Vec3, Vec3) {
        let pos = self.closest + self.velocity * tau - Vec3::new(0.0, 0.0, 0.5 * gravity * tau * tau);
        let vel = self.velocity - Vec3::new(0.0, 0.0, gravity * tau);
        (pos, vel)
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitDiagnostics {
    /// Time with the intensity envelope exp(-2 rho^2 / w0^2) above e^-2, s.
    pub crossing_time: f64,
    /// 2 w0 / T, m/s.
    pub mean_velocity: f64,
}

/// v-bar = 2 w0 / T.
pub fn transit_velocity(waist: f64, crossing_time: f64) -> f64 {
    2.0 * waist / crossing_time
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<AtomState>,
    pub escape_time: Option<f64>,
    pub transit: Option<TransitDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &AtomState {
        self.samples.last().expect("trajectories hold at least one sample")
    }
}

/// Largest time step allowed with the trap on: 1 / (50 nu_axial).
pub fn max_time_step(fort: &FortConfig, params: &CavityQedParams, species: &AtomSpecies) -> Result<f64> {
    if !fort.fort_on {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (50.0 * trap_frequencies(fort, params, species)?.axial))
}

/// Default step: 1 / (100 nu_axial).
pub fn default_time_step(fort: &FortConfig, params: &CavityQedParams, species: &AtomSpecies) -> Result<f64> {
    Ok(max_time_step(fort, params, species)? / 2.0)
}

/// Acceleration parts: trap force per unit mass (scaled later by 1 + eps)
/// and the axial energy terms at the same point.
struct Kicker {
    field: FortField,
    inv_mass: f64,
    gravity: f64,
}

impl Kicker {
    #[inline]
    fn accel(&self, trap_force: Vec3, eps: f64) -> Vec3 {
        let s = (1.0 + eps) * self.inv_mass;
        Vec3::new(trap_force.x * s, trap_force.y * s, trap_force.z * s - self.gravity)
    }
}

/// One velocity-Verlet step of length `dt` with intensity factor 1 + eps.
pub fn step(
    state: &AtomState,
    dt: f64,
    fort: &FortConfig,
    noise_sample: f64,
    params: &CavityQedParams,
    species: &AtomSpecies,
) -> Result<AtomState> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    let max_dt = max_time_step(fort, params, species)?;
    if dt > max_dt {
        return Err(Error::TimeStepTooLarge { dt, max_dt });
    }
    let k = Kicker {
        field: FortField::new(fort, params),
        inv_mass: 1.0 / species.mass,
        gravity: species.gravity,
    };
    let a0 = k.accel(k.field.force(state.position), noise_sample);
    let v_half = state.velocity + a0 * (0.5 * dt);
    let position = state.position + v_half * dt;
    let a1 = k.accel(k.field.force(position), noise_sample);
    let velocity = v_half + a1 * (0.5 * dt);
    let mut next = AtomState {
        position,
        velocity,
        time: state.time + dt,
        ..*state
    };
    next.energy_axial = k.field.axial_energy(position, velocity.x, species.mass);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapOptions {
    /// Integration step; `None` picks 1 / (100 nu_axial).
    pub dt: Option<f64>,
    /// Interval between stored samples, s. Zero stores only the endpoints.
    pub sample_interval: f64,
    pub gravity: bool,
}

impl Default for TrapOptions {
    fn default() -> Self {
        TrapOptions {
            dt: None,
            sample_interval: 0.0,
            gravity: true,
        }
    }
}

/// Why a trapped atom was declared lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeReason {
    AxialEnergy,
    AxialExcursion,
    RadialExcursion,
}

/// Integrate a trapped atom for `duration` with intensity noise applied by
/// zero-order hold. Escape is declared when the axial energy above the local
/// well bottom exceeds the local depth, when the atom strays more than
/// lambda_FORT / 2 from its initial well, or beyond 3 w0 radially.
pub fn simulate_trapped(
    initial: &AtomState,
    duration: f64,
    fort: &FortConfig,
    noise: &NoiseSeries,
    params: &CavityQedParams,
    species: &AtomSpecies,
    opts: &TrapOptions,
) -> Result<Trajectory> {
    Ok(simulate_trapped_detailed(initial, duration, fort, noise, params, species, opts)?.0)
}

pub(crate) fn simulate_trapped_detailed(
    initial: &AtomState,
    duration: f64,
    fort: &FortConfig,
    noise: &NoiseSeries,
    params: &CavityQedParams,
    species: &AtomSpecies,
    opts: &TrapOptions,
) -> Result<(Trajectory, Option<EscapeReason>)> {
    if initial.status != Status::Trapped {
        return Err(Error::param("initial.status", format!("expected trapped, got {}", initial.status.as_str())));
    }
    if !(duration >= 0.0) {
        return Err(Error::param("duration", "must be >= 0"));
    }
    if noise.duration() < duration {
        return Err(Error::NoiseTooShort {
            available: noise.duration(),
            required: duration,
        });
    }
    let max_dt = max_time_step(fort, params, species)?;
    let dt_req = match opts.dt {
        Some(dt) => dt,
        None => max_dt / 2.0,
    };
    if !(dt_req > 0.0) {
        return Err(Error::param("dt", "must be > 0"));
    }
    if dt_req > max_dt {
        return Err(Error::TimeStepTooLarge { dt: dt_req, max_dt });
    }

    let field = FortField::new(fort, params);
    let k = Kicker {
        field,
        inv_mass: 1.0 / species.mass,
        gravity: if opts.gravity { species.gravity } else { 0.0 },
    };
    let mass = species.mass;
    let n_steps = (duration / dt_req).ceil() as u64;
    let dt = if n_steps > 0 { duration / n_steps as f64 } else { 0.0 };
    let sample_every = if opts.sample_interval > 0.0 {
        ((opts.sample_interval / dt).round() as u64).max(1)
    } else {
        u64::MAX
    };

    let x_well = field.nearest_antinode(initial.position.x);
    let max_axial = params.lambda_fort() / 2.0;
    let max_rho_sq = 9.0 * params.waist * params.waist;
    let t0 = initial.time;

    let mut samples = Vec::new();
    let mut state = *initial;
    state.energy_axial = field.axial_energy(state.position, state.velocity.x, mass);
    samples.push(state);

    let mut pos = state.position;
    let mut vel = state.velocity;
    let mut force = field.force(pos);
    let mut reason = None;
    let mut i = 0u64;
    while i < n_steps {
        let t = i as f64 * dt;
        let eps = noise.at(t);
        let v_half = vel + k.accel(force, eps) * (0.5 * dt);
        pos += v_half * dt;
        force = field.force(pos);
        vel = v_half + k.accel(force, eps) * (0.5 * dt);
        i += 1;

        let e_ax = field.axial_energy(pos, vel.x, mass);
        let escaped = if e_ax > field.local_depth(pos) {
            Some(EscapeReason::AxialEnergy)
        } else if (pos.x - x_well).abs() > max_axial {
            Some(EscapeReason::AxialExcursion)
        } else if pos.rho_sq() > max_rho_sq {
            Some(EscapeReason::RadialExcursion)
        } else {
            None
        };
        if escaped.is_some() || i % sample_every == 0 || i == n_steps {
            state = AtomState {
                position: pos,
                velocity: vel,
                time: t0 + i as f64 * dt,
                status: state.status,
                energy_axial: e_ax,
            };
            if escaped.is_some() {
                state.set_status(Status::Escaped);
                reason = escaped;
            }
            samples.push(state);
            if escaped.is_some() {
                break;
            }
        }
    }
    let escape_time = reason.map(|_| state.time);
    Ok((
        Trajectory {
            samples,
            escape_time,
            transit: None,
        },
        reason,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitOptions {
    /// Spacing of stored samples, s. Also the resolution of the crossing time.
    pub sample_interval: f64,
    /// Integration step when the trap is on; `None` picks 1 / (100 nu_axial).
    pub dt: Option<f64>,
}

impl Default for TransitOptions {
    fn default() -> Self {
        TransitOptions {
            sample_interval: 0.5e-6,
            dt: None,
        }
    }
}

/// Follow an atom through the mode for `duration`. Ballistic (exact) with
/// the trap off; integrated with the trap on. The crossing time counts the
/// time spent with rho < w0, where the intensity envelope exceeds e^-2.
pub fn simulate_transit(
    initial: &AtomState,
    duration: f64,
    fort: &FortConfig,
    params: &CavityQedParams,
    species: &AtomSpecies,
    opts: &TransitOptions,
) -> Result<Trajectory> {
    if !matches!(initial.status, Status::Falling | Status::InMode) {
        return Err(Error::param(
            "initial.status",
            format!("expected falling or in_mode, got {}", initial.status.as_str()),
        ));
    }
    if !(duration > 0.0 && opts.sample_interval > 0.0) {
        return Err(Error::param("duration", "duration and sample interval must be > 0"));
    }
    let w0_sq = params.waist * params.waist;
    let l = params.cavity_length;
    let n_samples = (duration / opts.sample_interval).ceil() as usize;
    let ds = duration / n_samples as f64;

    let field = FortField::new(fort, params);
    let (dt, sub) = if fort.fort_on {
        let max_dt = max_time_step(fort, params, species)?;
        let want = opts.dt.unwrap_or(max_dt / 2.0);
        if want > max_dt {
            return Err(Error::TimeStepTooLarge { dt: want, max_dt });
        }
        let sub = (ds / want).ceil().max(1.0) as usize;
        (ds / sub as f64, sub)
    } else {
        (ds, 1)
    };
    let k = Kicker {
        field,
        inv_mass: 1.0 / species.mass,
        gravity: species.gravity,
    };

    let mut state = *initial;
    let mut samples = Vec::with_capacity(n_samples + 1);
    let mut inside_time = 0.0;
    let mut was_in = false;
    let in_mode = |p: Vec3| p.rho_sq() < w0_sq && p.x > 0.0 && p.x < l;
    // an atom is lost once it has been in the mode and then wanders past 2 w0
    let gone = |p: Vec3| p.rho_sq() > 4.0 * w0_sq || p.x <= 0.0 || p.x >= l;
    let update = |s: &mut AtomState, p: Vec3, seen: &mut bool| {
        if s.status == Status::Lost {
            return;
        }
        if in_mode(p) {
            s.set_status(Status::InMode);
            *seen = true;
        } else if *seen && gone(p) {
            s.set_status(Status::Lost);
        }
    };
    let start = state.position;
    update(&mut state, start, &mut was_in);
    samples.push(state);

    let mut force = field.force(state.position);
    for i in 1..=n_samples {
        if fort.fort_on {
            let (mut pos, mut vel) = (state.position, state.velocity);
            for _ in 0..sub {
                let v_half = vel + k.accel(force, 0.0) * (0.5 * dt);
                pos += v_half * dt;
                force = field.force(pos);
                vel = v_half + k.accel(force, 0.0) * (0.5 * dt);
            }
            state.position = pos;
            state.velocity = vel;
        } else {
            let p = Passage {
                closest: initial.position,
                velocity: initial.velocity,
            };
            let (pos, vel) = p.at(i as f64 * ds, species.gravity);
            state.position = pos;
            state.velocity = vel;
        }
        state.time = initial.time + i as f64 * ds;
        state.energy_axial = field.axial_energy(state.position, state.velocity.x, species.mass);
        let pos = state.position;
        if in_mode(pos) {
            inside_time += ds;
        }
        update(&mut state, pos, &mut was_in);
        samples.push(state);
    }
    let transit = (inside_time > 0.0).then(|| TransitDiagnostics {
        crossing_time: inside_time,
        mean_velocity: transit_velocity(params.waist, inside_time),
    });
    Ok(Trajectory {
        samples,
        escape_time: None,
        transit,
    })
}

/// Put an atom into the trap at its current position: status becomes
/// trapped and the axial energy is evaluated in the trap.
pub fn load_into_trap(state: &AtomState, fort: &FortConfig, params: &CavityQedParams, species: &AtomSpecies) -> AtomState {
    let field = FortField::new(fort, params);
    let mut s = *state;
    s.set_status(Status::Trapped);
    s.energy_axial = field.axial_energy(s.position, s.velocity.x, species.mass);
    s
}

/// Whether an atom with this state is bound by the trap: negative total
/// energy, axial energy below the local depth and inside 3 w0.
pub fn is_bound(state: &AtomState, fort: &FortConfig, params: &CavityQedParams, species: &AtomSpecies) -> bool {
    if !fort.fort_on {
        return false;
    }
    let field = FortField::new(fort, params);
    let p = state.position;
    let total = state.kinetic_energy(species.mass) + field.potential(p);
    total < 0.0
        && field.axial_energy(p, state.velocity.x, species.mass) < field.local_depth(p)
        && p.rho_sq() < 9.0 * params.waist * params.waist
        && p.x > 0.0
        && p.x < params.cavity_length
}
