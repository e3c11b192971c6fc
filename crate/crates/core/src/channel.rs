//! Synthetic air-to-ground propagation.
//!
//! Received power from a ground base station is `p * rho / PL`, where `rho` is
//! a Rayleigh-distributed small-scale fading draw and `PL` the average path
//! loss (free-space factor times an LoS/NLoS excess-loss mix). SINR is taken
//! per site against the sum of all other sites plus noise, and a location is
//! in outage when even the best site falls below the SINR threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Bounds, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Position { x, y, z };
        if !(x.is_finite() && y.is_finite() && z.is_finite()) || z < 0.0 {
            return Err(Error::Geometry(format!("invalid position {p:?}")));
        }
        Ok(p)
    }

    /// Ground-plane point lifted to altitude `z`.
    pub fn at_altitude(xy: [f64; 2], z: f64) -> Self {
        Position {
            x: xy[0],
            y: xy[1],
            z,
        }
    }

    pub fn horizontal_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.horizontal_distance(other).hypot(self.z - other.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbsSite {
    pub position: Position,
    /// Linear transmit power in milliwatts.
    pub tx_power_mw: f64,
}

impl GbsSite {
    pub fn new(position: Position, tx_power_mw: f64) -> Result<Self> {
        if !(tx_power_mw > 0.0 && tx_power_mw.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "transmit power must be positive, got {tx_power_mw}"
            )));
        }
        Ok(GbsSite {
            position,
            tx_power_mw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub carrier_freq: f64,
    pub light_speed: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub los_a: f64,
    pub los_b: f64,
    /// Linear noise power in milliwatts.
    pub noise_power: f64,
    /// Linear SINR threshold.
    pub sinr_threshold: f64,
    /// Use the LoS-probability weighted path loss instead of `Gamma * eta_los`.
    pub use_full_path_loss: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier_freq: 2e9,
            light_speed: SPEED_OF_LIGHT,
            eta_los: 1.0,
            eta_nlos: 20.0,
            los_a: 5.0,
            los_b: 0.5,
            noise_power: dbm_to_mw(-140.0),
            sinr_threshold: 0.65,
            use_full_path_loss: false,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("light_speed", self.light_speed),
            ("eta_los", self.eta_los),
            ("eta_nlos", self.eta_nlos),
            ("los_a", self.los_a),
            ("los_b", self.los_b),
            ("noise_power", self.noise_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.sinr_threshold.is_nan() || self.sinr_threshold < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sinr_threshold must be non-negative, got {}",
                self.sinr_threshold
            )));
        }
        if self.eta_nlos < self.eta_los {
            return Err(Error::InvalidArgument(
                "eta_nlos must be at least eta_los".into(),
            ));
        }
        Ok(())
    }
}

/// Rayleigh small-scale fading with the given scale parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingModel {
    pub scale: f64,
}

impl Default for FadingModel {
    fn default() -> Self {
        FadingModel { scale: 1.0 }
    }
}

impl FadingModel {
    pub fn rayleigh(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "fading scale must be positive, got {scale}"
            )));
        }
        Ok(FadingModel { scale })
    }

    /// Inverse-CDF draw: `scale * sqrt(-2 ln U)`, `U` uniform on (0, 1].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        self.scale * (-2.0 * u.ln()).sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let s = x / self.scale;
        -(-0.5 * s * s).exp_m1()
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Elevation angle of `uav` as seen from `gbs`, in degrees within [0, 90].
pub fn elevation_angle(uav: &Position, gbs: &Position) -> Result<f64> {
    let horiz = uav.horizontal_distance(gbs);
    let dz = (uav.z - gbs.z).abs();
    if horiz == 0.0 && dz == 0.0 {
        return Err(Error::Geometry(
            "elevation angle undefined for coincident points".into(),
        ));
    }
    Ok(dz.atan2(horiz).to_degrees())
}

/// Probability of a line-of-sight link at elevation `psi` (degrees).
pub fn los_probability(psi: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (-b * (psi - a)).exp())
}

/// `(4 pi f_c d / c)^2` for the 3D distance between the two points.
pub fn free_space_factor(uav: &Position, gbs: &Position, carrier_freq: f64) -> Result<f64> {
    free_space_factor_with(uav, gbs, carrier_freq, SPEED_OF_LIGHT)
}

fn free_space_factor_with(
    uav: &Position,
    gbs: &Position,
    carrier_freq: f64,
    light_speed: f64,
) -> Result<f64> {
    let d = uav.distance(gbs);
    if d == 0.0 {
        return Err(Error::Geometry("zero link distance".into()));
    }
    let r = 4.0 * std::f64::consts::PI * carrier_freq * d / light_speed;
    Ok(r * r)
}

/// Linear average path loss between a UAV and a site.
pub fn average_path_loss(uav: &Position, gbs: &Position, params: &ChannelParams) -> Result<f64> {
    let gamma = free_space_factor_with(uav, gbs, params.carrier_freq, params.light_speed)?;
    if !params.use_full_path_loss {
        return Ok(gamma * params.eta_los);
    }
    let psi = elevation_angle(uav, gbs)?;
    let xi = los_probability(psi, params.los_a, params.los_b);
    Ok(gamma * (params.eta_los * xi + params.eta_nlos * (1.0 - xi)))
}

pub fn channel_gain(
    uav: &Position,
    gbs: &Position,
    params: &ChannelParams,
    fading_draw: f64,
) -> Result<f64> {
    if fading_draw.is_nan() || fading_draw < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fading draw must be non-negative, got {fading_draw}"
        )));
    }
    Ok(fading_draw / average_path_loss(uav, gbs, params)?)
}

/// Per-site SINR `p_j h_j / (sum_{j' != j} p_j' h_j' + noise)`.
pub fn sinr_vector(
    uav: &Position,
    sites: &[GbsSite],
    params: &ChannelParams,
    fading_draws: &[f64],
) -> Result<Vec<f64>> {
    if sites.is_empty() {
        return Err(Error::InvalidArgument("no base stations".into()));
    }
    if fading_draws.len() != sites.len() {
        return Err(Error::ShapeMismatch {
            expected: sites.len(),
            actual: fading_draws.len(),
        });
    }
    let rx = sites
        .iter()
        .zip(fading_draws)
        .map(|(s, &rho)| Ok(s.tx_power_mw * channel_gain(uav, &s.position, params, rho)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(sinr_from_rx(&rx, params.noise_power))
}

fn sinr_from_rx(rx: &[f64], noise: f64) -> Vec<f64> {
    (0..rx.len())
        .map(|j| {
            let interference: f64 = rx
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &r)| r)
                .sum();
            rx[j] / (interference + noise)
        })
        .collect()
}

/// A propagation environment: sites, channel constants and fading law.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sites: Vec<GbsSite>,
    pub params: ChannelParams,
    pub fading: FadingModel,
}

impl Scene {
    pub fn new(sites: Vec<GbsSite>, params: ChannelParams, fading: FadingModel) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidArgument("no base stations".into()));
        }
        params.validate()?;
        Ok(Scene {
            sites,
            params,
            fading,
        })
    }

    /// Fading-free received power `p_j / PL_j` per site. The random part of
    /// each link is a multiplicative fading draw on top of this.
    pub fn mean_rx(&self, q: &Position) -> Result<Vec<f64>> {
        self.sites
            .iter()
            .map(|s| Ok(s.tx_power_mw / average_path_loss(q, &s.position, &self.params)?))
            .collect()
    }

    fn max_sinr_draw<R: Rng + ?Sized>(&self, mean_rx: &[f64], scratch: &mut Vec<f64>, rng: &mut R) -> f64 {
        scratch.clear();
        scratch.extend(mean_rx.iter().map(|&m| m * self.fading.sample(rng)));
        let total_noise = self.params.noise_power;
        let mut best = f64::NEG_INFINITY;
        for j in 0..scratch.len() {
            let interference: f64 = scratch
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &r)| r)
                .sum();
            best = best.max(scratch[j] / (interference + total_noise));
        }
        best
    }
}

/// Draw fresh fading for every site and return 1 if the best SINR reaches
/// the threshold, else 0.
pub fn sample_label<R: Rng + ?Sized>(q: &Position, scene: &Scene, rng: &mut R) -> Result<u8> {
    let mean = scene.mean_rx(q)?;
    let mut scratch = Vec::with_capacity(mean.len());
    let best = scene.max_sinr_draw(&mean, &mut scratch, rng);
    Ok(u8::from(best >= scene.params.sinr_threshold))
}

/// Fraction of `n_samples` independent fading realizations in which every
/// site's SINR is at or below the threshold.
pub fn monte_carlo_outage<R: Rng + ?Sized>(
    q: &Position,
    scene: &Scene,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let mean = scene.mean_rx(q)?;
    let mut scratch = Vec::with_capacity(mean.len());
    let threshold = scene.params.sinr_threshold;
    let outages = (0..n_samples)
        .filter(|_| scene.max_sinr_draw(&mean, &mut scratch, rng) <= threshold)
        .count();
    Ok(outages as f64 / n_samples as f64)
}

/// Exact outage for a single-site scene: `P(rho <= gamma_th * PL * noise / p)`.
pub fn single_site_outage(q: &Position, scene: &Scene) -> Result<f64> {
    if scene.sites.len() != 1 {
        return Err(Error::InvalidArgument(
            "closed-form outage needs exactly one site".into(),
        ));
    }
    let site = &scene.sites[0];
    let pl = average_path_loss(q, &site.position, &scene.params)?;
    let x = scene.params.sinr_threshold * pl * scene.params.noise_power / site.tx_power_mw;
    Ok(scene.fading.cdf(x))
}

/// A [`Scene`] observed from a fixed flight altitude over a bounded area.
/// Planning and learning work on ground-plane points; this lifts them to
/// 3D before touching the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Airspace {
    pub scene: Scene,
    pub bounds: Bounds,
    pub altitude: f64,
}

impl Airspace {
    pub fn new(scene: Scene, bounds: Bounds, altitude: f64) -> Result<Self> {
        bounds.validate()?;
        if !(altitude >= 0.0 && altitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid altitude {altitude}")));
        }
        Ok(Airspace {
            scene,
            bounds,
            altitude,
        })
    }

    pub fn lift(&self, xy: [f64; 2]) -> Position {
        Position::at_altitude(xy, self.altitude)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, xy: [f64; 2], rng: &mut R) -> Result<u8> {
        sample_label(&self.lift(xy), &self.scene, rng)
    }

    pub fn outage<R: Rng + ?Sized>(&self, xy: [f64; 2], n_samples: usize, rng: &mut R) -> Result<f64> {
        monte_carlo_outage(&self.lift(xy), &self.scene, n_samples, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pos(x: f64, y: f64, z: f64) -> Position {
        Position::new(x, y, z).unwrap()
    }

    fn site(x: f64, y: f64, p: f64) -> GbsSite {
        GbsSite::new(pos(x, y, 0.0), p).unwrap()
    }

    #[test]
    fn elevation_examples() {
        let g = pos(0.0, 0.0, 0.0);
        assert!((elevation_angle(&pos(0.0, 0.0, 100.0), &g).unwrap() - 90.0).abs() < 1e-12);
        assert!((elevation_angle(&pos(1e-9, 0.0, 100.0), &g).unwrap() - 90.0).abs() < 1e-6);
        assert_eq!(elevation_angle(&pos(50.0, 0.0, 0.0), &g).unwrap(), 0.0);
        assert!((elevation_angle(&pos(100.0, 0.0, 100.0), &g).unwrap() - 45.0).abs() < 1e-12);
        assert!(elevation_angle(&g, &g).is_err());
    }

    #[test]
    fn position_rejects_negative_altitude() {
        assert!(Position::new(0.0, 0.0, -1.0).is_err());
        assert!(Position::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn los_probability_examples() {
        assert!((los_probability(5.0, 5.0, 0.5) - 1.0 / 6.0).abs() < 1e-15);
        assert!((los_probability(90.0, 5.0, 0.5) - 1.0).abs() < 1e-9);
        // 1 / (1 + 5 exp(-20)), evaluated independently
        assert!((los_probability(45.0, 5.0, 0.5) - 0.999_999_989_694_232_1).abs() < 1e-15);
    }

    #[test]
    fn free_space_examples() {
        let g = pos(0.0, 0.0, 0.0);
        let unit = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * 2e9);
        let f = free_space_factor(&pos(unit, 0.0, 0.0), &g, 2e9).unwrap();
        assert!((f - 1.0).abs() < 1e-12);

        let f = free_space_factor(&pos(1000.0, 0.0, 0.0), &g, 2e9).unwrap();
        assert!((f / 7.027_752_565_193_773e9 - 1.0).abs() < 1e-12);
        assert!((10.0 * f.log10() - 98.468_164_623).abs() < 1e-6);

        let f2 = free_space_factor(&pos(2000.0, 0.0, 0.0), &g, 2e9).unwrap();
        assert!((f2 / f - 4.0).abs() < 1e-12);
        assert!(free_space_factor(&g, &g, 2e9).is_err());
    }

    #[test]
    fn path_loss_modes() {
        let g = pos(0.0, 0.0, 0.0);
        let u = pos(100.0, 0.0, 100.0);
        let mut params = ChannelParams::default();
        let gamma = free_space_factor(&u, &g, 2e9).unwrap();
        assert_eq!(average_path_loss(&u, &g, &params).unwrap(), gamma);

        params.use_full_path_loss = true;
        // xi = 1/(1+5e^-20); PL = Gamma (xi + 20 (1 - xi))
        let expected = 1.405_550_788_259_025e8;
        let got = average_path_loss(&u, &g, &params).unwrap();
        assert!((got / expected - 1.0).abs() < 1e-12, "{got}");

        // xi == 1 collapses the full form onto the simplified one
        params.los_b = 50.0;
        let full = average_path_loss(&u, &g, &params).unwrap();
        params.use_full_path_loss = false;
        let simple = average_path_loss(&u, &g, &params).unwrap();
        assert!((full / simple - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_examples() {
        let g = pos(0.0, 0.0, 0.0);
        let u = pos(300.0, 400.0, 100.0);
        let params = ChannelParams::default();
        let pl = average_path_loss(&u, &g, &params).unwrap();
        assert_eq!(channel_gain(&u, &g, &params, 0.0).unwrap(), 0.0);
        assert!((channel_gain(&u, &g, &params, pl).unwrap() - 1.0).abs() < 1e-15);
        assert!(channel_gain(&u, &g, &params, -1.0).is_err());

        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let fading = FadingModel::default();
        let ga = channel_gain(&u, &g, &params, fading.sample(&mut a)).unwrap();
        let gb = channel_gain(&u, &g, &params, fading.sample(&mut b)).unwrap();
        assert_eq!(ga, gb);
        assert!(ga > 0.0);
    }

    #[test]
    fn sinr_single_and_symmetric() {
        let params = ChannelParams::default();
        let u = pos(500.0, 0.0, 100.0);
        let s = [site(0.0, 0.0, 200.0)];
        let h = channel_gain(&u, &s[0].position, &params, 1.3).unwrap();
        let got = sinr_vector(&u, &s, &params, &[1.3]).unwrap();
        assert!((got[0] / (200.0 * h / params.noise_power) - 1.0).abs() < 1e-14);

        let s = [site(-500.0, 0.0, 200.0), site(500.0, 0.0, 200.0)];
        let u = pos(0.0, 0.0, 100.0);
        let got = sinr_vector(&u, &s, &params, &[0.7, 0.7]).unwrap();
        let ph = 200.0 * channel_gain(&u, &s[0].position, &params, 0.7).unwrap();
        let expect = ph / (ph + params.noise_power);
        assert!((got[0] - expect).abs() < 1e-15);
        assert!((got[1] - expect).abs() < 1e-15);

        assert!(sinr_vector(&u, &[], &params, &[]).is_err());
        assert!(sinr_vector(&u, &s, &params, &[1.0]).is_err());
    }

    #[test]
    fn sinr_three_site_brute_force() {
        // Received powers computed by hand from p / ((4 pi f d / c)^2) * rho.
        let mut params = ChannelParams::default();
        params.noise_power = 1e-9;
        let u = pos(100.0, 200.0, 100.0);
        let s = [
            site(0.0, 0.0, 200.0),
            site(1000.0, 0.0, 100.0),
            site(0.0, 800.0, 400.0),
        ];
        let draws = [0.9, 1.7, 0.4];
        let got = sinr_vector(&u, &s, &params, &draws).unwrap();
        let expected = [
            4.794_210_107_252_413,
            0.057_663_297_371_599_656,
            0.131_385_885_205_440_56,
        ];
        for (g, e) in got.iter().zip(expected) {
            assert!((g / e - 1.0).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn labels_at_threshold_extremes() {
        let mut params = ChannelParams::default();
        let sites = vec![site(0.0, 0.0, 200.0), site(3000.0, 0.0, 200.0)];
        let q = pos(1500.0, 10.0, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        params.sinr_threshold = 0.0;
        let scene = Scene::new(sites.clone(), params, FadingModel::default()).unwrap();
        assert!((0..1000).all(|_| sample_label(&q, &scene, &mut rng).unwrap() == 1));
        assert_eq!(monte_carlo_outage(&q, &scene, 1000, &mut rng).unwrap(), 0.0);

        params.sinr_threshold = f64::INFINITY;
        let scene = Scene::new(sites, params, FadingModel::default()).unwrap();
        assert!((0..1000).all(|_| sample_label(&q, &scene, &mut rng).unwrap() == 0));
    }

    #[test]
    fn outage_rejects_zero_samples() {
        let scene = Scene::new(
            vec![site(0.0, 0.0, 200.0)],
            ChannelParams::default(),
            FadingModel::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(monte_carlo_outage(&pos(1.0, 1.0, 100.0), &scene, 0, &mut rng).is_err());
    }

    #[test]
    fn single_site_outage_vanishes_with_power() {
        let mut params = ChannelParams::default();
        params.noise_power = 1e-6;
        let q = pos(2000.0, 0.0, 100.0);
        let weak = Scene::new(vec![site(0.0, 0.0, 1.0)], params, FadingModel::default()).unwrap();
        let strong = Scene::new(vec![site(0.0, 0.0, 1e12)], params, FadingModel::default()).unwrap();
        let pw = single_site_outage(&q, &weak).unwrap();
        let ps = single_site_outage(&q, &strong).unwrap();
        assert!(pw > ps);
        assert!(ps < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(monte_carlo_outage(&q, &strong, 10_000, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn rayleigh_cdf_matches_samples() {
        let f = FadingModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let below = (0..n).filter(|_| f.sample(&mut rng) <= 1.0).count() as f64 / n as f64;
        let p = f.cdf(1.0);
        assert!((below - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn units() {
        assert!((dbm_to_mw(-140.0) - 1e-14).abs() < 1e-28);
        assert!((mw_to_dbm(200.0) - 23.010_299_956_639_81).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let mut p = ChannelParams::default();
        assert!(p.validate().is_ok());
        p.eta_nlos = 0.5;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.noise_power = 0.0;
        assert!(p.validate().is_err());
        assert!(GbsSite::new(pos(0.0, 0.0, 0.0), -1.0).is_err());
        assert!(FadingModel::rayleigh(0.0).is_err());
    }
}
