//! Dense numbering of the decision variables.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Quantity {
    RhoH2,
    RhoNg,
    Eta,
    SupplyFlow,
    WithdrawalFlow,
    Energy,
    FlowIn,
    FlowOut,
    GammaOut,
    Ratio,
    CompressorFlow,
}

impl Quantity {
    pub const ALL: [Quantity; 11] = [
        Quantity::RhoH2,
        Quantity::RhoNg,
        Quantity::Eta,
        Quantity::SupplyFlow,
        Quantity::WithdrawalFlow,
        Quantity::Energy,
        Quantity::FlowIn,
        Quantity::FlowOut,
        Quantity::GammaOut,
        Quantity::Ratio,
        Quantity::CompressorFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::RhoH2 => "rho_H2",
            Quantity::RhoNg => "rho_NG",
            Quantity::Eta => "eta",
            Quantity::SupplyFlow => "q_s",
            Quantity::WithdrawalFlow => "q_w",
            Quantity::Energy => "g_E",
            Quantity::FlowIn => "f0",
            Quantity::FlowOut => "fL",
            Quantity::GammaOut => "gamma_L",
            Quantity::Ratio => "alpha",
            Quantity::CompressorFlow => "fc",
        }
    }

    fn slot(self) -> usize {
        Quantity::ALL.iter().position(|&q| q == self).unwrap()
    }
}

/// Entity counts per variable family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EntityCounts {
    pub nodes: usize,
    pub supplies: usize,
    pub withdrawals: usize,
    pub segments: usize,
    pub compressors: usize,
}

/// Variables are stored quantity by quantity; inside a quantity, entity by
/// entity; inside an entity, time step by time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariableIndex {
    n_time: usize,
    counts: EntityCounts,
    offsets: [usize; 12],
}

impl VariableIndex {
    pub fn new(counts: EntityCounts, n_time: usize) -> Self {
        let mut offsets = [0; 12];
        for (k, q) in Quantity::ALL.iter().enumerate() {
            offsets[k + 1] = offsets[k] + Self::entities_of(&counts, *q) * n_time;
        }
        Self {
            n_time,
            counts,
            offsets,
        }
    }

    fn entities_of(c: &EntityCounts, q: Quantity) -> usize {
        match q {
            Quantity::RhoH2 | Quantity::RhoNg | Quantity::Eta => c.nodes,
            Quantity::SupplyFlow => c.supplies,
            Quantity::WithdrawalFlow | Quantity::Energy => c.withdrawals,
            Quantity::FlowIn | Quantity::FlowOut | Quantity::GammaOut => c.segments,
            Quantity::Ratio | Quantity::CompressorFlow => c.compressors,
        }
    }

    pub fn entities(&self, q: Quantity) -> usize {
        Self::entities_of(&self.counts, q)
    }

    pub fn counts(&self) -> EntityCounts {
        self.counts
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn len(&self) -> usize {
        self.offsets[11]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn at(&self, q: Quantity, entity: usize, t: usize) -> usize {
        debug_assert!(entity < self.entities(q) && t < self.n_time);
        self.offsets[q.slot()] + entity * self.n_time + t
    }

    /// Index range occupied by a quantity.
    pub fn range(&self, q: Quantity) -> std::ops::Range<usize> {
        let s = q.slot();
        self.offsets[s]..self.offsets[s + 1]
    }

    /// Inverse of [`VariableIndex::at`].
    pub fn decode(&self, i: usize) -> (Quantity, usize, usize) {
        assert!(i < self.len(), "variable {i} out of range");
        let s = (0..11).rfind(|&s| self.offsets[s] <= i && i < self.offsets[s + 1]).unwrap();
        let local = i - self.offsets[s];
        (Quantity::ALL[s], local / self.n_time, local % self.n_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_variable_has_one_index() {
        let c = EntityCounts {
            nodes: 5,
            supplies: 1,
            withdrawals: 1,
            segments: 3,
            compressors: 1,
        };
        let idx = VariableIndex::new(c, 4);
        assert_eq!(idx.len(), 4 * (3 * 5 + 1 + 2 + 3 * 3 + 2));
        let mut seen = vec![false; idx.len()];
        for q in Quantity::ALL {
            for e in 0..idx.entities(q) {
                for t in 0..4 {
                    let i = idx.at(q, e, t);
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(idx.decode(i), (q, e, t));
                    assert!(idx.range(q).contains(&i));
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
