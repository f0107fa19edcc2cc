use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LatencyMatrix, SimError, VirtualClock, ms_to_ns, ns_to_ms};
use crate::comm::{CommError, LinkClass, Transport};

/// Seed of the stream for one directed pair and class: FNV-1a over the
/// names, folded with the run seed.
pub fn stream_seed(seed: u64, from: &str, to: &str, class: LinkClass) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let tag = format!("{from}\u{1f}{to}\u{1f}{class:?}");
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Latency source backed by a matrix. Every directed pair and traffic class
/// draws from its own stream, so adding control traffic never shifts the
/// delays seen by data messages.
#[derive(Debug, Clone)]
pub struct SimTransport {
    pub matrix: LatencyMatrix,
    seed: u64,
    streams: HashMap<(String, String, LinkClass), ChaCha8Rng>,
}

impl SimTransport {
    pub fn new(matrix: LatencyMatrix, seed: u64) -> Self {
        Self { matrix, seed, streams: HashMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draw(&mut self, from: &str, to: &str, class: LinkClass) -> Result<Option<f64>, SimError> {
        let seed = self.seed;
        let rng = self
            .streams
            .entry((from.to_string(), to.to_string(), class))
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(stream_seed(seed, from, to, class)));
        self.matrix.sample(from, to, rng)
    }
}

impl Transport for SimTransport {
    fn carry(&mut self, from: &str, to: &str, class: LinkClass) -> Result<Option<f64>, CommError> {
        self.draw(from, to, class).map_err(|e| CommError::Transport(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Scheduled { at_ms: f64 },
    Dropped,
}

/// Draws one crossing from `from` to `to` and, unless lost, queues `item`
/// for its arrival.
pub fn deliver<T>(transport: &mut SimTransport, clock: &mut VirtualClock<T>, from: &str, to: &str, class: LinkClass, item: T) -> Result<Delivery, SimError> {
    match transport.draw(from, to, class)? {
        None => Ok(Delivery::Dropped),
        Some(ms) => {
            let at = clock.now_ns() + ms_to_ns(ms);
            clock.schedule_at(at, item)?;
            Ok(Delivery::Scheduled { at_ms: ns_to_ms(at) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::LinkSpec;

    fn matrix(spec: LinkSpec) -> LatencyMatrix {
        let mut m = LatencyMatrix::new(20.0);
        m.set("X", "Y", spec).unwrap();
        m
    }

    #[test]
    fn half_rtt_without_jitter() {
        let mut t = SimTransport::new(matrix(LinkSpec::new(50.0, 0.0, 0.0)), 1);
        let mut clock = VirtualClock::new();
        clock.advance(10.0).unwrap();
        assert_eq!(deliver(&mut t, &mut clock, "X", "Y", LinkClass::Data, ()).unwrap(), Delivery::Scheduled { at_ms: 35.0 });
    }

    #[test]
    fn same_node_is_fixed() {
        let mut t = SimTransport::new(matrix(LinkSpec::new(50.0, 5.0, 0.5)), 1);
        let mut clock = VirtualClock::new();
        assert_eq!(deliver(&mut t, &mut clock, "X", "X", LinkClass::Data, ()).unwrap(), Delivery::Scheduled { at_ms: 0.02 });
    }

    #[test]
    fn total_loss_always_drops() {
        let mut t = SimTransport::new(matrix(LinkSpec::new(50.0, 0.0, 1.0)), 1);
        let mut clock: VirtualClock<()> = VirtualClock::new();
        for _ in 0..100 {
            assert_eq!(deliver(&mut t, &mut clock, "X", "Y", LinkClass::Data, ()).unwrap(), Delivery::Dropped);
        }
        assert!(clock.is_idle());
    }

    #[test]
    fn unknown_pair() {
        let mut t = SimTransport::new(matrix(LinkSpec::new(1.0, 0.0, 0.0)), 1);
        let mut clock = VirtualClock::new();
        assert_eq!(deliver(&mut t, &mut clock, "X", "Z", LinkClass::Data, ()), Err(SimError::UnknownNodePair("X".into(), "Z".into())));
    }

    #[test]
    fn classes_do_not_share_streams() {
        let m = matrix(LinkSpec::new(50.0, 5.0, 0.1));
        let mut a = SimTransport::new(m.clone(), 9);
        let mut b = SimTransport::new(m, 9);
        let plain: Vec<_> = (0..50).map(|_| a.draw("X", "Y", LinkClass::Data).unwrap()).collect();
        let mixed: Vec<_> = (0..50)
            .map(|_| {
                b.draw("X", "Y", LinkClass::Control).unwrap();
                b.draw("Y", "X", LinkClass::Data).unwrap();
                b.draw("X", "Y", LinkClass::Data).unwrap()
            })
            .collect();
        assert_eq!(plain, mixed);
    }
}
