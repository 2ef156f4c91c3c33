//! Per-agent accounting of bits on the wire.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// What a transfer carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PayloadKind {
    ModelExchange,
    FastLsuCounts,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 2] = [PayloadKind::ModelExchange, PayloadKind::FastLsuCounts];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Bits one agent sent and received, split by payload kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub sent_bits: [u64; 2],
    pub received_bits: [u64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    agents: BTreeMap<usize, Traffic>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_bits(&mut self, from: usize, to: usize, kind: PayloadKind, bits: u64) {
        self.agents.entry(from).or_default().sent_bits[kind.slot()] += bits;
        self.agents.entry(to).or_default().received_bits[kind.slot()] += bits;
    }

    pub fn record_bytes(&mut self, from: usize, to: usize, kind: PayloadKind, bytes: usize) {
        self.record_bits(from, to, kind, 8 * bytes as u64);
    }

    pub fn traffic(&self, agent: usize) -> Traffic {
        self.agents.get(&agent).copied().unwrap_or_default()
    }

    pub fn sent_bits(&self, agent: usize, kind: PayloadKind) -> u64 {
        self.traffic(agent).sent_bits[kind.slot()]
    }

    pub fn received_bits(&self, agent: usize, kind: PayloadKind) -> u64 {
        self.traffic(agent).received_bits[kind.slot()]
    }

    /// Every transfer counted once, at its sender.
    pub fn total_bits(&self) -> u64 {
        PayloadKind::ALL.iter().map(|&k| self.total_bits_of(k)).sum()
    }

    pub fn total_bits_of(&self, kind: PayloadKind) -> u64 {
        self.agents.values().map(|t| t.sent_bits[kind.slot()]).sum()
    }

    /// Total traffic in kilobytes (1 kB = 1000 bytes).
    pub fn total_kb(&self) -> f64 {
        self.total_bits() as f64 / 8000.0
    }

    pub fn is_empty(&self) -> bool {
        self.total_bits() == 0
    }

    pub fn merge(&mut self, other: &CommLedger) {
        for (&agent, t) in &other.agents {
            let mine = self.agents.entry(agent).or_default();
            for k in 0..2 {
                mine.sent_bits[k] += t.sent_bits[k];
                mine.received_bits[k] += t.received_bits[k];
            }
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = (usize, &Traffic)> {
        self.agents.iter().map(|(&a, t)| (a, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sent_equals_received() {
        let mut ledger = CommLedger::new();
        ledger.record_bytes(0, 1, PayloadKind::ModelExchange, 100);
        ledger.record_bytes(2, 1, PayloadKind::ModelExchange, 50);
        ledger.record_bits(1, 0, PayloadKind::FastLsuCounts, 7);
        assert_eq!(ledger.total_bits(), 1207);
        assert_eq!(ledger.received_bits(1, PayloadKind::ModelExchange), 1200);
        assert_eq!(ledger.sent_bits(0, PayloadKind::ModelExchange), 800);
        let received: u64 = ledger
            .agents()
            .map(|(_, t)| t.received_bits.iter().sum::<u64>())
            .sum();
        assert_eq!(received, ledger.total_bits());
        assert_eq!(
            ledger.total_bits(),
            ledger.total_bits_of(PayloadKind::ModelExchange)
                + ledger.total_bits_of(PayloadKind::FastLsuCounts)
        );
        assert!((ledger.total_kb() - 1207.0 / 8000.0).abs() < 1e-15);
    }

    #[test]
    fn merge_adds() {
        let mut a = CommLedger::new();
        a.record_bits(0, 1, PayloadKind::FastLsuCounts, 5);
        let mut b = CommLedger::new();
        b.record_bits(0, 1, PayloadKind::FastLsuCounts, 3);
        a.merge(&b);
        assert_eq!(a.sent_bits(0, PayloadKind::FastLsuCounts), 8);
        assert!(CommLedger::new().is_empty());
    }
}
