//! Extended state vectors: the agent block plus whatever protocol-internal
//! blocks a variant carries (estimates, observers, auxiliary integrators,
//! adaptive gains), in a fixed layout.

use nalgebra::{DVector, DVectorView};
use serde::{Deserialize, Serialize};

/// Block kinds in layout order. `Aux` is the sliding-mode integrator `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Agent states `x`, length n·d.
    Agents,
    /// Parameter estimates `θ̂`, length n·r.
    ThetaHat,
    /// Observer states `x̂`, length n·d.
    Observer,
    /// Auxiliary controller states `η`, length n·d.
    Eta,
    /// Disturbance-observer integrators `z`, length n·d.
    Aux,
    /// Per-agent adaptive coupling gains `c_i`, length n.
    Gains,
}

impl Block {
    pub fn label(self) -> &'static str {
        match self {
            Block::Agents => "x",
            Block::ThetaHat => "theta",
            Block::Observer => "xhat",
            Block::Eta => "eta",
            Block::Aux => "z",
            Block::Gains => "c",
        }
    }
}

/// Deterministic block layout for a variant: total length and offsets follow
/// from `(n, d, r, blocks)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    blocks: Vec<(Block, usize, usize)>,
}

impl StateLayout {
    pub fn new(n: usize, d: usize, r: usize, kinds: &[Block]) -> Self {
        let mut blocks = Vec::with_capacity(kinds.len());
        let mut offset = 0;
        for &kind in kinds {
            let len = match kind {
                Block::Agents | Block::Observer | Block::Eta | Block::Aux => n * d,
                Block::ThetaHat => n * r,
                Block::Gains => n,
            };
            blocks.push((kind, offset, len));
            offset += len;
        }
        Self { n, d, r, blocks }
    }

    pub fn total_len(&self) -> usize {
        self.blocks.last().map(|&(_, o, l)| o + l).unwrap_or(0)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Block, usize, usize)> + '_ {
        self.blocks.iter().copied()
    }

    pub fn has_block(&self, kind: Block) -> bool {
        self.blocks.iter().any(|&(k, _, _)| k == kind)
    }

    pub fn block_range(&self, kind: Block) -> Option<(usize, usize)> {
        self.blocks.iter().find(|&&(k, _, _)| k == kind).map(|&(_, o, l)| (o, l))
    }

    /// Offset of agent `i`'s slice inside `kind` (per-agent width d, r or 1).
    pub fn agent_offset(&self, kind: Block, i: usize) -> Option<(usize, usize)> {
        let (offset, _) = self.block_range(kind)?;
        let width = match kind {
            Block::ThetaHat => self.r,
            Block::Gains => 1,
            _ => self.d,
        };
        Some((offset + i * width, width))
    }
}

/// A state snapshot: time plus the stacked block vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub time: f64,
    pub data: DVector<f64>,
    pub layout: StateLayout,
}

impl ExtendedState {
    pub fn zeros(layout: StateLayout) -> Self {
        let len = layout.total_len();
        Self { time: 0.0, data: DVector::zeros(len), layout }
    }

    pub fn agent(&self, kind: Block, i: usize) -> DVectorView<'_, f64> {
        let (offset, width) = self
            .layout
            .agent_offset(kind, i)
            .expect("variant does not carry this block");
        self.data.rows(offset, width)
    }

    pub fn block(&self, kind: Block) -> Option<DVectorView<'_, f64>> {
        self.layout.block_range(kind).map(|(o, l)| self.data.rows(o, l))
    }

    pub fn set_agent(&mut self, kind: Block, i: usize, value: &[f64]) {
        let (offset, width) = self
            .layout
            .agent_offset(kind, i)
            .expect("variant does not carry this block");
        assert_eq!(value.len(), width);
        for (k, v) in value.iter().enumerate() {
            self.data[offset + k] = *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let l = StateLayout::new(3, 2, 4, &[Block::Agents, Block::ThetaHat, Block::Gains]);
        assert_eq!(l.total_len(), 6 + 12 + 3);
        assert_eq!(l.block_range(Block::Agents), Some((0, 6)));
        assert_eq!(l.block_range(Block::ThetaHat), Some((6, 12)));
        assert_eq!(l.block_range(Block::Gains), Some((18, 3)));
        assert_eq!(l.agent_offset(Block::ThetaHat, 2), Some((6 + 8, 4)));
        assert_eq!(l.agent_offset(Block::Gains, 1), Some((19, 1)));
        assert!(!l.has_block(Block::Observer));
    }

    #[test]
    fn state_views() {
        let l = StateLayout::new(2, 2, 0, &[Block::Agents, Block::Aux]);
        let mut s = ExtendedState::zeros(l);
        s.set_agent(Block::Aux, 1, &[3.0, 4.0]);
        assert_eq!(s.agent(Block::Aux, 1).as_slice(), &[3.0, 4.0]);
        assert_eq!(s.agent(Block::Agents, 0).as_slice(), &[0.0, 0.0]);
    }
}
