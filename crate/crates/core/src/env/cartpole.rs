//! Cart-pole physics with the canonical constants and Euler integration
//! (position advanced with the pre-step velocity, as in the reference
//! implementation everyone benchmarks against).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MdpSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpolePhysics {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length, in meters.
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    /// Radians. Default is 12 degrees.
    pub angle_threshold: f64,
    pub x_threshold: f64,
    pub time_limit: u32,
}

impl Default for CartpolePhysics {
    fn default() -> Self {
        CartpolePhysics {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            angle_threshold: 12.0 * std::f64::consts::PI / 180.0,
            x_threshold: 2.4,
            time_limit: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub t: u32,
}

#[derive(Debug, Clone)]
pub struct CartpoleEnv {
    physics: CartpolePhysics,
    state: CartpoleState,
    done: bool,
}

impl CartpoleEnv {
    pub fn new(physics: CartpolePhysics) -> Self {
        CartpoleEnv {
            physics,
            state: CartpoleState::default(),
            done: true, // must reset before stepping
        }
    }

    pub fn spec(&self) -> MdpSpec {
        MdpSpec {
            action_count: 2,
            gamma: 0.99,
            time_limit: self.physics.time_limit,
            r_max: 1.0,
        }
    }

    pub fn physics(&self) -> &CartpolePhysics {
        &self.physics
    }

    pub fn state(&self) -> CartpoleState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Draws the raw start state: every component uniform in [−0.05, 0.05].
    pub fn reset_raw<R: Rng>(&mut self, rng: &mut R) -> CartpoleState {
        let mut draw = || -0.05 + 0.1 * rng.random::<f64>();
        self.state = CartpoleState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
            t: 0,
        };
        self.done = false;
        self.state
    }

    /// Full reset protocol: raw draw, then two uniformly random forced
    /// actions before the agent takes over. Returns the three states visited
    /// so the observer can build a meaningful initial frame stack.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> [CartpoleState; 3] {
        let s0 = self.reset_raw(rng);
        let mut states = [s0; 3];
        for slot in states.iter_mut().skip(1) {
            let a = rng.random_range(0..2usize);
            let (s, _, done) = self.step(a).expect("episode just reset");
            debug_assert!(!done, "a forced reset action cannot terminate from ±0.05");
            *slot = s;
        }
        states
    }

    pub fn step(&mut self, action: usize) -> Result<(CartpoleState, f64, bool)> {
        if self.done {
            return Err(Error::contract("cartpole_step on a finished episode"));
        }
        if action > 1 {
            return Err(Error::contract(format!("cartpole action {action} out of range")));
        }
        let p = &self.physics;
        let s = &mut self.state;

        let force = if action == 1 { p.force_mag } else { -p.force_mag };
        let total_mass = p.cart_mass + p.pole_mass;
        let polemass_length = p.pole_mass * p.half_length;
        let (sin_t, cos_t) = s.theta.sin_cos();

        let temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
        let theta_acc = (p.gravity * sin_t - cos_t * temp)
            / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

        s.x += p.tau * s.x_dot;
        s.x_dot += p.tau * x_acc;
        s.theta += p.tau * s.theta_dot;
        s.theta_dot += p.tau * theta_acc;
        s.t += 1;

        self.done = s.x.abs() > p.x_threshold
            || s.theta.abs() > p.angle_threshold
            || s.t >= p.time_limit;
        let reward = if self.done { 0.0 } else { 1.0 };
        Ok((*s, reward, self.done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// RNG whose f64 draws are always exactly 0.5, which the reset affine
    /// map sends to 0.
    struct Midpoint;
    impl RngCore for Midpoint {
        fn next_u32(&mut self) -> u32 {
            1 << 31
        }
        fn next_u64(&mut self) -> u64 {
            1 << 63
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0);
        }
    }

    #[test]
    fn raw_reset_midpoint_rng_gives_zero_state() {
        let mut env = CartpoleEnv::new(CartpolePhysics::default());
        let s = env.reset_raw(&mut Midpoint);
        assert_eq!((s.x, s.x_dot, s.theta, s.theta_dot), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let mut a = CartpoleEnv::new(CartpolePhysics::default());
        let mut b = CartpoleEnv::new(CartpolePhysics::default());
        let sa = a.reset(&mut ChaCha8Rng::seed_from_u64(17));
        let sb = b.reset(&mut ChaCha8Rng::seed_from_u64(17));
        assert_eq!(sa, sb);
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn raw_reset_components_fill_the_legal_range() {
        let mut env = CartpoleEnv::new(CartpolePhysics::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for _ in 0..10_000 {
            let s = env.reset_raw(&mut rng);
            for (i, v) in [s.x, s.x_dot, s.theta, s.theta_dot].into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        for i in 0..4 {
            assert!(lo[i] >= -0.05 && hi[i] <= 0.05, "component {i} escaped");
            assert!(lo[i] < -0.04 && hi[i] > 0.04, "component {i} suspiciously narrow");
        }
    }

    #[test]
    fn one_push_from_rest_matches_hand_integration() {
        // From the all-zero state with a rightward push, the equations give
        // xacc = 400/41 and thetaacc = -600/41, so after one tau = 0.02 step
        // x_dot = 8/41 and theta_dot = -12/41 while positions stay 0.
        let mut env = CartpoleEnv::new(CartpolePhysics::default());
        env.reset_raw(&mut Midpoint);
        let (s, r, done) = env.step(1).unwrap();
        assert!(!done);
        assert_eq!(r, 1.0);
        assert_eq!(s.x, 0.0);
        assert_eq!(s.theta, 0.0);
        assert!((s.x_dot - 8.0 / 41.0).abs() < 1e-12);
        assert!((s.theta_dot + 12.0 / 41.0).abs() < 1e-12);

        // Second identical push: sin(theta)=0 still, so the same
        // accelerations repeat and positions pick up tau * velocity.
        let (s2, _, done2) = env.step(1).unwrap();
        assert!(!done2, "upright cart survives two pushes");
        assert!((s2.x - 0.02 * 8.0 / 41.0).abs() < 1e-12);
        assert!((s2.theta + 0.02 * 12.0 / 41.0).abs() < 1e-12);
        assert!((s2.x_dot - 16.0 / 41.0).abs() < 1e-12);
        assert!((s2.theta_dot + 24.0 / 41.0).abs() < 1e-12);
        assert!(s2.theta.abs() < env.physics().angle_threshold);
    }

    #[test]
    fn crossing_the_angle_threshold_terminates() {
        let mut env = CartpoleEnv::new(CartpolePhysics::default());
        env.reset_raw(&mut Midpoint);
        // theta + tau * theta_dot = 0.2 + 0.02 crosses the 12 degree
        // threshold (0.2094...) in one step.
        env.state.theta = 0.2;
        env.state.theta_dot = 1.1;
        let (s, r, done) = env.step(1).unwrap();
        assert!(done);
        assert_eq!(r, 0.0);
        assert!(s.theta.abs() > env.physics().angle_threshold);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn episode_cannot_outlive_time_limit() {
        let physics = CartpolePhysics::default();
        let mut env = CartpoleEnv::new(physics);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            env.reset(&mut rng);
            let mut steps = 2; // the two forced reset actions
            loop {
                // Crude balancer: push against the lean.
                let a = if env.state().theta > 0.0 { 1 } else { 0 };
                let (s, r, done) = env.step(a).unwrap();
                steps += 1;
                assert!(r == 0.0 || r == 1.0);
                if done {
                    assert!(s.t <= physics.time_limit);
                    assert_eq!(s.t, steps);
                    break;
                }
            }
        }
    }
}
