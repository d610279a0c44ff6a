use std::fmt;
use std::str::FromStr;

use crate::rng::RngStream;

/// Upper bound on the number of internal sigmoid terms of a `ReluSum` unit.
/// Internal states are stored as a bit mask.
pub const MAX_RELU_TERMS: u32 = 64;

/// Default number of sigmoid terms used to approximate a rectifier.
pub const DEFAULT_RELU_TERMS: u32 = 8;

/// Distribution family of a unit.
///
/// `Sigmoid` and `Tanh` are log-linear binary units, `p(z | a) ∝ exp(ξ(z)·a)`,
/// with encodings `{0, 1}` and `{-1, +1}`. `ReluSum(k)` owns `k` independent
/// sigmoid sites with pre-activations `a - i + 0.5` (i = 1..k) and encodes
/// to the number of active sites; its mean saturates at `k`. `Delta` is a
/// deterministic linear unit whose only event with nonzero probability is
/// its pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Sigmoid,
    Tanh,
    ReluSum(u32),
    Delta,
}

/// A realized value of a unit.
///
/// Binary sites are packed into `Bits` (bit `i` is internal site `i`);
/// `Delta` units carry their real value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Bits(u64),
    Value(f64),
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Internal pre-activations of a `ReluSum(k)` unit: `a - i + 0.5`, i = 1..=k.
pub fn relu_expand(a: f64, k: u32) -> Vec<f64> {
    (1..=k).map(|i| a - i as f64 + 0.5).collect()
}

impl UnitKind {
    /// Number of binary sites the unit owns (0 for deterministic units).
    pub fn sites(self) -> u32 {
        match self {
            UnitKind::Sigmoid | UnitKind::Tanh => 1,
            UnitKind::ReluSum(k) => k,
            UnitKind::Delta => 0,
        }
    }

    pub fn is_stochastic(self) -> bool {
        !matches!(self, UnitKind::Delta)
    }

    /// Encoded value ξ of a single site being off / on.
    pub fn site_encoding(self, on: bool) -> f64 {
        match (self, on) {
            (UnitKind::Tanh, false) => -1.0,
            (_, false) => 0.0,
            (_, true) => 1.0,
        }
    }

    /// Log-odds `ln p(site on) - ln p(site off)` of site `i` at pre-activation `a`.
    #[inline]
    pub fn site_logit(self, a: f64, site: u32) -> f64 {
        match self {
            UnitKind::Sigmoid => a,
            UnitKind::Tanh => 2.0 * a,
            UnitKind::ReluSum(_) => a - site as f64 - 0.5,
            UnitKind::Delta => f64::NAN,
        }
    }

    pub fn is_legal(self, event: &Event) -> bool {
        match (self, event) {
            (UnitKind::Delta, Event::Value(v)) => v.is_finite(),
            (UnitKind::Delta, Event::Bits(_)) => false,
            (_, Event::Value(_)) => false,
            (kind, Event::Bits(mask)) => {
                let n = kind.sites();
                n >= 64 || *mask >> n == 0
            }
        }
    }

    /// ξ(event).
    pub fn encode(self, event: &Event) -> f64 {
        match (self, event) {
            (UnitKind::Delta, Event::Value(v)) => *v,
            (UnitKind::Sigmoid, Event::Bits(m)) => (*m & 1) as f64,
            (UnitKind::Tanh, Event::Bits(m)) => {
                if *m & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            (UnitKind::ReluSum(_), Event::Bits(m)) => m.count_ones() as f64,
            (_, Event::Value(v)) => *v,
            (UnitKind::Delta, Event::Bits(m)) => *m as f64,
        }
    }

    /// Event whose encoding equals `value`, if any. For `ReluSum` the
    /// lowest `value` sites are switched on.
    pub fn event_for_value(self, value: f64) -> Option<Event> {
        match self {
            UnitKind::Sigmoid if value == 0.0 => Some(Event::Bits(0)),
            UnitKind::Sigmoid if value == 1.0 => Some(Event::Bits(1)),
            UnitKind::Tanh if value == -1.0 => Some(Event::Bits(0)),
            UnitKind::Tanh if value == 1.0 => Some(Event::Bits(1)),
            UnitKind::ReluSum(k) => {
                if value.fract() != 0.0 || value < 0.0 || value > k as f64 {
                    return None;
                }
                let n = value as u32;
                Some(Event::Bits(if n >= 64 { u64::MAX } else { (1u64 << n) - 1 }))
            }
            UnitKind::Delta if value.is_finite() => Some(Event::Value(value)),
            _ => None,
        }
    }

    /// The "positive" event used for marginals and decisions: site 0 on for
    /// binary kinds, value above one half for `Delta`.
    pub fn is_positive(self, event: &Event) -> bool {
        match event {
            Event::Bits(m) => m & 1 == 1,
            Event::Value(v) => *v > 0.5,
        }
    }

    /// `ln p(event | a)`. Illegal events and `Delta` mismatches give `-inf`.
    pub fn log_prob(self, event: &Event, a: f64) -> f64 {
        if !self.is_legal(event) {
            return f64::NEG_INFINITY;
        }
        match (self, event) {
            (UnitKind::Delta, Event::Value(v)) => {
                if *v == a {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            (kind, Event::Bits(mask)) => (0..kind.sites())
                .map(|i| {
                    let t = kind.site_logit(a, i);
                    if (mask >> i) & 1 == 1 {
                        -softplus(-t)
                    } else {
                        -softplus(t)
                    }
                })
                .sum(),
            _ => f64::NEG_INFINITY,
        }
    }

    /// E[ξ | a].
    pub fn mean(self, a: f64) -> f64 {
        match self {
            UnitKind::Sigmoid => sigmoid(a),
            UnitKind::Tanh => a.tanh(),
            UnitKind::ReluSum(k) => (1..=k).map(|i| sigmoid(a - i as f64 + 0.5)).sum(),
            UnitKind::Delta => a,
        }
    }

    /// d E[ξ | a] / da.
    pub fn mean_derivative(self, a: f64) -> f64 {
        match self {
            UnitKind::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
            UnitKind::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            UnitKind::ReluSum(k) => (1..=k)
                .map(|i| {
                    let s = sigmoid(a - i as f64 + 0.5);
                    s * (1.0 - s)
                })
                .sum(),
            UnitKind::Delta => 1.0,
        }
    }

    /// Draw an event from `p(· | a)`.
    pub fn sample(self, a: f64, rng: &mut RngStream) -> Event {
        match self {
            UnitKind::Delta => Event::Value(a),
            kind => {
                let mut mask = 0u64;
                for i in 0..kind.sites() {
                    if rng.bernoulli(sigmoid(kind.site_logit(a, i))) {
                        mask |= 1 << i;
                    }
                }
                Event::Bits(mask)
            }
        }
    }

    /// Every event with nonzero probability, for binary kinds. `Delta` has
    /// none to enumerate independently of its input.
    pub fn enumerate_events(self) -> Vec<Event> {
        match self {
            UnitKind::Delta => Vec::new(),
            kind => (0..(1u64 << kind.sites())).map(Event::Bits).collect(),
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Sigmoid => f.write_str("sigmoid"),
            UnitKind::Tanh => f.write_str("tanh"),
            UnitKind::ReluSum(k) => write!(f, "relusum:{k}"),
            UnitKind::Delta => f.write_str("delta"),
        }
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(UnitKind::Sigmoid),
            "tanh" => Ok(UnitKind::Tanh),
            "delta" => Ok(UnitKind::Delta),
            "relusum" => Ok(UnitKind::ReluSum(DEFAULT_RELU_TERMS)),
            other => match other.strip_prefix("relusum:") {
                Some(k) => k
                    .parse()
                    .map(UnitKind::ReluSum)
                    .map_err(|_| format!("bad relusum term count in `{other}`")),
                None => Err(format!("unknown unit kind `{other}`")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigmoid_symmetric_point() {
        assert_abs_diff_eq!(UnitKind::Sigmoid.log_prob(&Event::Bits(1), 0.0), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(UnitKind::Sigmoid.mean(0.0), 0.5);
    }

    #[test]
    fn tanh_symmetric_point() {
        assert_abs_diff_eq!(UnitKind::Tanh.log_prob(&Event::Bits(0), 0.0), 0.5f64.ln(), epsilon = 1e-15);
        assert_eq!(UnitKind::Tanh.mean(0.0), 0.0);
        assert_eq!(UnitKind::Tanh.encode(&Event::Bits(0)), -1.0);
    }

    #[test]
    fn sigmoid_log_prob_at_two() {
        // ln(e^2 / (1 + e^2)) = -ln(1 + e^-2), evaluated at 40 digits.
        let expected = -0.126_928_011_042_972_5;
        assert_abs_diff_eq!(UnitKind::Sigmoid.log_prob(&Event::Bits(1), 2.0), expected, epsilon = 1e-15);
    }

    #[test]
    fn probabilities_normalize() {
        for kind in [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::ReluSum(1), UnitKind::ReluSum(5)] {
            for a in [-30.0, -3.3, -0.1, 0.0, 0.7, 4.0, 25.0] {
                let total: f64 = kind.enumerate_events().iter().map(|e| kind.log_prob(e, a).exp()).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mean_matches_enumeration() {
        for kind in [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::ReluSum(4)] {
            for a in [-2.0, 0.3, 1.7] {
                let m: f64 = kind
                    .enumerate_events()
                    .iter()
                    .map(|e| kind.encode(e) * kind.log_prob(e, a).exp())
                    .sum();
                assert_abs_diff_eq!(m, kind.mean(a), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn relu_expand_offsets() {
        assert_eq!(relu_expand(0.0, 1), vec![-0.5]);
        assert_eq!(relu_expand(2.0, 3), vec![1.5, 0.5, -0.5]);
        let a = 1.3;
        let via_expansion: f64 = relu_expand(a, 6).into_iter().map(sigmoid).sum();
        assert_abs_diff_eq!(via_expansion, UnitKind::ReluSum(6).mean(a), epsilon = 1e-15);
    }

    #[test]
    fn relusum_mean_fixture() {
        // Σ_{i=1..8} σ(2 - i + 0.5), summed term by term at 40 digits.
        // The sum tracks softplus(2) ≈ 2.127 rather than relu(2) = 2.
        let fixture = 2.120_227_491_119_089;
        let m = UnitKind::ReluSum(8).mean(2.0);
        assert_abs_diff_eq!(m, fixture, epsilon = 1e-12);
        assert!((m - 2.0).abs() < 0.13);
    }

    #[test]
    fn delta_is_point_mass() {
        assert_eq!(UnitKind::Delta.log_prob(&Event::Value(1.5), 1.5), 0.0);
        assert_eq!(UnitKind::Delta.log_prob(&Event::Value(1.0), 1.5), f64::NEG_INFINITY);
        let mut rng = RngStream::new(0);
        assert_eq!(UnitKind::Delta.sample(-0.25, &mut rng), Event::Value(-0.25));
    }

    #[test]
    fn legality() {
        assert!(UnitKind::Sigmoid.is_legal(&Event::Bits(1)));
        assert!(!UnitKind::Sigmoid.is_legal(&Event::Bits(2)));
        assert!(UnitKind::ReluSum(3).is_legal(&Event::Bits(7)));
        assert!(!UnitKind::ReluSum(3).is_legal(&Event::Bits(8)));
        assert!(!UnitKind::Delta.is_legal(&Event::Bits(0)));
        assert!(!UnitKind::Tanh.is_legal(&Event::Value(1.0)));
    }

    #[test]
    fn kind_text_roundtrip() {
        for kind in [UnitKind::Sigmoid, UnitKind::Tanh, UnitKind::ReluSum(12), UnitKind::Delta] {
            assert_eq!(kind.to_string().parse::<UnitKind>().unwrap(), kind);
        }
        assert_eq!("relusum".parse::<UnitKind>().unwrap(), UnitKind::ReluSum(DEFAULT_RELU_TERMS));
        assert!("softmax".parse::<UnitKind>().is_err());
    }
}
