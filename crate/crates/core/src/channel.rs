//! Per-message V2V link model: Bernoulli loss, bounded multiplicative latency
//! jitter and serialization delay, plus the density-coupled loss table used
//! by the swarm-size sweep.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header bytes carried by every intent message.
pub const HEADER_BYTES: u32 = 16;
/// Two `f64` spatial coordinates.
pub const COORDINATE_BYTES: u32 = 16;

/// Bytes of an intent message for `k` actions: probabilities, coordinates and header.
pub fn intent_payload_bytes(k: usize) -> u32 {
    8 * k as u32 + COORDINATE_BYTES + HEADER_BYTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub name: String,
    pub nominal_latency_ms: f64,
    pub loss_rate: f64,
    pub bandwidth_mbps: f64,
    #[serde(default = "default_jitter")]
    pub latency_jitter_fraction: f64,
}

fn default_jitter() -> f64 {
    0.2
}

impl ChannelProfile {
    /// Conventional proxy V2X link: 25 ms, 8 % loss, 10 Mbps.
    pub fn baseline_v2x() -> Self {
        Self {
            name: "baseline_v2x".into(),
            nominal_latency_ms: 25.0,
            loss_rate: 0.08,
            bandwidth_mbps: 10.0,
            latency_jitter_fraction: 0.2,
        }
    }

    /// Low-latency setting: 5 ms, 1.2 % loss, 200 Mbps.
    pub fn six_g() -> Self {
        Self {
            name: "6g".into(),
            nominal_latency_ms: 5.0,
            loss_rate: 0.012,
            bandwidth_mbps: 200.0,
            latency_jitter_fraction: 0.02,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.nominal_latency_ms >= 0.0 && self.nominal_latency_ms.is_finite()) {
            return Err(Error::config(
                format!("{prefix}.nominal_latency_ms"),
                "must be finite and >= 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(Error::config(format!("{prefix}.loss_rate"), "must be in [0, 1]"));
        }
        if !(self.bandwidth_mbps > 0.0 && self.bandwidth_mbps.is_finite()) {
            return Err(Error::config(format!("{prefix}.bandwidth_mbps"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.latency_jitter_fraction) {
            return Err(Error::config(
                format!("{prefix}.latency_jitter_fraction"),
                "must be in [0, 1)",
            ));
        }
        Ok(())
    }

    /// Serialization delay of `payload_bytes` at this bandwidth, in ms.
    pub fn serialization_delay_ms(&self, payload_bytes: u32) -> f64 {
        f64::from(payload_bytes) * 8.0 / (self.bandwidth_mbps * 1000.0)
    }

    /// Closed support `[lo, hi]` of delivered latencies for a payload.
    pub fn latency_bounds_ms(&self, payload_bytes: u32) -> (f64, f64) {
        let ser = self.serialization_delay_ms(payload_bytes);
        let j = self.latency_jitter_fraction;
        (
            self.nominal_latency_ms * (1.0 - j) + ser,
            self.nominal_latency_ms * (1.0 + j) + ser,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageEnvelope {
    pub payload_bytes: u32,
    pub sender: usize,
    pub send_time_ms: f64,
}

impl MessageEnvelope {
    pub fn new(payload_bytes: u32, sender: usize, send_time_ms: f64) -> Result<Self> {
        if payload_bytes == 0 || payload_bytes >= 1024 {
            return Err(Error::config(
                "channel.payload_bytes",
                format!("payload of {payload_bytes} B is not in (0, 1024)"),
            ));
        }
        Ok(Self {
            payload_bytes,
            sender,
            send_time_ms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered { latency_ms: f64 },
    Dropped,
}

impl Delivery {
    pub fn latency_ms(self) -> Option<f64> {
        match self {
            Delivery::Delivered { latency_ms } => Some(latency_ms),
            Delivery::Dropped => None,
        }
    }
}

/// Samples the fate of one message.
///
/// Always consumes exactly two uniforms (loss, then jitter) so that runs
/// differing only in loss rate stay aligned on the same random stream.
pub fn sample_delivery<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    msg: &MessageEnvelope,
    rng: &mut R,
) -> Delivery {
    let loss_draw: f64 = rng.random();
    let jitter_draw: f64 = rng.random();
    if loss_draw < profile.loss_rate {
        return Delivery::Dropped;
    }
    let j = profile.latency_jitter_fraction;
    let u = j * (2.0 * jitter_draw - 1.0);
    let latency_ms =
        profile.nominal_latency_ms * (1.0 + u) + profile.serialization_delay_ms(msg.payload_bytes);
    Delivery::Delivered { latency_ms }
}

/// Anchor points `(swarm size N, effective loss)` for density-coupled loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityLossTable {
    pub anchors: Vec<(u32, f64)>,
}

impl Default for DensityLossTable {
    fn default() -> Self {
        Self {
            anchors: vec![(2, 0.006), (4, 0.066), (8, 0.186)],
        }
    }
}

impl DensityLossTable {
    pub fn new(anchors: Vec<(u32, f64)>) -> Result<Self> {
        let table = Self { anchors };
        table.validate("channel.density_loss")?;
        Ok(table)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::config(key, "anchor table is empty"));
        }
        for (i, &(n, q)) in self.anchors.iter().enumerate() {
            if n < 1 {
                return Err(Error::config(key, "swarm sizes must be >= 1"));
            }
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::config(key, format!("loss {q} at N={n} outside [0, 1]")));
            }
            if i > 0 {
                let (pn, pq) = self.anchors[i - 1];
                if n <= pn {
                    return Err(Error::config(key, "swarm sizes must be strictly increasing"));
                }
                if q < pq {
                    return Err(Error::config(key, "loss must be nondecreasing in N"));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear loss at swarm size `n`.
///
/// Below the first anchor the loss ramps linearly from 0 at `N = 1`; above
/// the last anchor it is held at the last value.
pub fn effective_loss_for_density(table: &DensityLossTable, n: u32) -> Result<f64> {
    let anchors = &table.anchors;
    let (&(n0, q0), &(nl, ql)) = match (anchors.first(), anchors.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyLossTable),
    };
    let n = n.max(1);
    if n <= n0 {
        if n0 <= 1 {
            return Ok(q0);
        }
        return Ok(q0 * f64::from(n - 1) / f64::from(n0 - 1));
    }
    if n >= nl {
        return Ok(ql);
    }
    for pair in anchors.windows(2) {
        let (na, qa) = pair[0];
        let (nb, qb) = pair[1];
        if n == na {
            return Ok(qa);
        }
        if n == nb {
            return Ok(qb);
        }
        if n > na && n < nb {
            let t = f64::from(n - na) / f64::from(nb - na);
            return Ok(qa + t * (qb - qa));
        }
    }
    Ok(ql)
}

/// `(sent − delivered) / sent`, or 0 when nothing was sent.
pub fn measure_effective_loss(sent: u64, delivered: u64) -> Result<f64> {
    if delivered > sent {
        return Err(Error::DeliveredExceedsSent { sent, delivered });
    }
    if sent == 0 {
        return Ok(0.0);
    }
    Ok((sent - delivered) as f64 / sent as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};

    fn profile(latency: f64, loss: f64, bw: f64, jitter: f64) -> ChannelProfile {
        ChannelProfile {
            name: "t".into(),
            nominal_latency_ms: latency,
            loss_rate: loss,
            bandwidth_mbps: bw,
            latency_jitter_fraction: jitter,
        }
    }

    #[test]
    fn deterministic_latency_examples() {
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let msg = MessageEnvelope::new(500, 1, 0.0).unwrap();
        let d = sample_delivery(&profile(25.0, 0.0, 10.0, 0.0), &msg, &mut rng);
        assert!((d.latency_ms().unwrap() - 25.4).abs() < 1e-12);
        let d = sample_delivery(&profile(5.0, 0.0, 200.0, 0.0), &msg, &mut rng);
        assert!((d.latency_ms().unwrap() - 5.02).abs() < 1e-12);
    }

    #[test]
    fn full_loss_always_drops() {
        let mut rng = stream(1, 0, 0, Role::CommNoise);
        let msg = MessageEnvelope::new(72, 1, 0.0).unwrap();
        let p = profile(5.0, 1.0, 200.0, 0.2);
        assert!((0..1000).all(|_| sample_delivery(&p, &msg, &mut rng) == Delivery::Dropped));
    }

    #[test]
    fn payload_must_be_sub_kilobyte() {
        assert!(MessageEnvelope::new(0, 0, 0.0).is_err());
        assert!(MessageEnvelope::new(1024, 0, 0.0).is_err());
        assert_eq!(intent_payload_bytes(5), 72);
    }

    #[test]
    fn density_table_examples() {
        let t = DensityLossTable::default();
        assert_eq!(effective_loss_for_density(&t, 4).unwrap(), 0.066);
        assert_eq!(effective_loss_for_density(&t, 2).unwrap(), 0.006);
        assert!((effective_loss_for_density(&t, 6).unwrap() - 0.126).abs() < 1e-12);
        assert!((effective_loss_for_density(&t, 3).unwrap() - 0.036).abs() < 1e-12);
        assert_eq!(effective_loss_for_density(&t, 1).unwrap(), 0.0);
        assert_eq!(effective_loss_for_density(&t, 20).unwrap(), 0.186);
        let empty = DensityLossTable { anchors: vec![] };
        assert!(matches!(
            effective_loss_for_density(&empty, 3),
            Err(Error::EmptyLossTable)
        ));
    }

    #[test]
    fn density_table_validation() {
        assert!(DensityLossTable::new(vec![(2, 0.1), (4, 0.05)]).is_err());
        assert!(DensityLossTable::new(vec![(4, 0.1), (4, 0.2)]).is_err());
        assert!(DensityLossTable::new(vec![(2, 1.5)]).is_err());
        assert!(DensityLossTable::new(vec![]).is_err());
    }

    #[test]
    fn measured_loss_examples() {
        assert!((measure_effective_loss(100, 92).unwrap() - 0.08).abs() < 1e-12);
        assert_eq!(measure_effective_loss(0, 0).unwrap(), 0.0);
        assert!((measure_effective_loss(1000, 934).unwrap() - 0.066).abs() < 1e-12);
        assert!(measure_effective_loss(3, 4).is_err());
    }

    #[test]
    fn profile_validation_names_keys() {
        let err = profile(5.0, 1.5, 200.0, 0.1).validate("channel").unwrap_err();
        assert!(err.to_string().contains("channel.loss_rate"));
        let err = profile(5.0, 0.1, 0.0, 0.1).validate("channel").unwrap_err();
        assert!(err.to_string().contains("channel.bandwidth_mbps"));
        assert!(profile(5.0, 0.1, 1.0, 1.0).validate("channel").is_err());
    }
}
