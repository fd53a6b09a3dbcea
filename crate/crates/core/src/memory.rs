//! Hierarchy of memory cells. Each cell owns an optional local expert bank,
//! a bounded FIFO of latent vectors and a context register. Cells form a
//! forest: context flows down from a root, summaries flow back up.

use std::collections::{BTreeMap, VecDeque};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::hamiltonian::ExpertBank;
use crate::real::all_finite;

pub type CellId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Mean,
    Max,
    Last,
}

impl FromStr for Reduce {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reduce::Mean),
            "max" => Ok(Reduce::Max),
            "last" => Ok(Reduce::Last),
            other => Err(Error::InvalidArgument(format!(
                "unknown reduction `{other}` (expected mean, max or last)"
            ))),
        }
    }
}

impl Reduce {
    /// Reduces a non-empty list of equal-length vectors; an empty list gives
    /// the zero vector.
    pub fn apply<'a, I>(self, dim: usize, items: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acc: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for item in items {
            count += 1;
            match (&mut acc, self) {
                (None, _) => acc = Some(item.to_vec()),
                (Some(a), Reduce::Mean) => a.iter_mut().zip(item).for_each(|(x, y)| *x += y),
                (Some(a), Reduce::Max) => a.iter_mut().zip(item).for_each(|(x, &y)| *x = x.max(y)),
                (Some(a), Reduce::Last) => a.copy_from_slice(item),
            }
        }
        let mut out = acc.unwrap_or_else(|| vec![0.0; dim]);
        if self == Reduce::Mean && count > 1 {
            let n = count as f64;
            out.iter_mut().for_each(|x| *x /= n);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AkashaCell {
    id: CellId,
    bank: Option<Arc<ExpertBank<f64>>>,
    buffer: VecDeque<Vec<f64>>,
    capacity: usize,
    context: Vec<f64>,
    children: Vec<CellId>,
    parent: Option<CellId>,
}

impl AkashaCell {
    fn new(id: CellId, capacity: usize, latent_dim: usize) -> Self {
        Self {
            id,
            bank: None,
            buffer: VecDeque::with_capacity(capacity),
            capacity,
            context: vec![0.0; latent_dim],
            children: Vec::new(),
            parent: None,
        }
    }

    pub fn id(&self) -> CellId {
        self.id
    }

    pub fn bank(&self) -> Option<&Arc<ExpertBank<f64>>> {
        self.bank.as_ref()
    }

    pub fn buffer(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.buffer.iter().map(Vec::as_slice)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn children(&self) -> &[CellId] {
        &self.children
    }

    pub fn parent(&self) -> Option<CellId> {
        self.parent
    }

    fn latent_dim(&self) -> usize {
        self.context.len()
    }

    /// FIFO insert; evicts the oldest entry when full.
    pub fn insert_memory(&mut self, item: Vec<f64>) -> Result<()> {
        ensure_dim("memory item", self.latent_dim(), item.len())?;
        if !all_finite(&item) {
            return Err(Error::NonFinite("memory item"));
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(item);
        Ok(())
    }
}

/// A forest of cells sharing one latent size and buffer capacity.
#[derive(Debug, Clone)]
pub struct CellGraph {
    cells: BTreeMap<CellId, AkashaCell>,
    latent_dim: usize,
    capacity: usize,
}

impl CellGraph {
    pub fn new(latent_dim: usize, capacity: usize) -> Result<Self> {
        if latent_dim == 0 || capacity == 0 {
            return Err(Error::InvalidArgument(format!(
                "latent size and capacity must be positive (got {latent_dim}, {capacity})"
            )));
        }
        Ok(Self {
            cells: BTreeMap::new(),
            latent_dim,
            capacity,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn add_cell(&mut self, id: CellId) -> Result<()> {
        if self.cells.contains_key(&id) {
            return Err(Error::DuplicateCell(id));
        }
        self.cells.insert(id, AkashaCell::new(id, self.capacity, self.latent_dim));
        Ok(())
    }

    pub fn set_bank(&mut self, id: CellId, bank: Arc<ExpertBank<f64>>) -> Result<()> {
        self.cell_mut(id)?.bank = Some(bank);
        Ok(())
    }

    pub fn cell(&self, id: CellId) -> Result<&AkashaCell> {
        self.cells.get(&id).ok_or(Error::UnknownCell(id))
    }

    fn cell_mut(&mut self, id: CellId) -> Result<&mut AkashaCell> {
        self.cells.get_mut(&id).ok_or(Error::UnknownCell(id))
    }

    pub fn cells(&self) -> impl Iterator<Item = &AkashaCell> {
        self.cells.values()
    }

    /// Cells without a parent, in id order.
    pub fn roots(&self) -> Vec<CellId> {
        self.cells
            .values()
            .filter(|c| c.parent.is_none())
            .map(|c| c.id)
            .collect()
    }

    /// Chain from `id` up to its root, starting with `id`.
    pub fn ancestors(&self, id: CellId) -> Result<Vec<CellId>> {
        let mut out = vec![id];
        let mut cur = self.cell(id)?.parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.cell(p)?.parent;
        }
        Ok(out)
    }

    pub fn add_child(&mut self, parent: CellId, child: CellId) -> Result<()> {
        self.cell(parent)?;
        let existing = self.cell(child)?.parent;
        let chain = self.ancestors(parent)?;
        if let Some(pos) = chain.iter().position(|&c| c == child) {
            // chain = parent, .., child; report child -> .. -> parent -> child
            let mut path: Vec<CellId> = chain[..=pos].iter().rev().copied().collect();
            path.push(child);
            return Err(Error::Cycle { path });
        }
        if let Some(p) = existing {
            return Err(Error::AlreadyParented { child, parent: p });
        }
        self.cell_mut(child)?.parent = Some(parent);
        self.cell_mut(parent)?.children.push(child);
        Ok(())
    }

    /// Removes the edge above `child`, making it a root. No-op for roots.
    pub fn detach(&mut self, child: CellId) -> Result<()> {
        let Some(p) = self.cell(child)?.parent else {
            return Ok(());
        };
        self.cell_mut(p)?.children.retain(|&c| c != child);
        self.cell_mut(child)?.parent = None;
        Ok(())
    }

    pub fn insert_memory(&mut self, id: CellId, item: Vec<f64>) -> Result<()> {
        self.cell_mut(id)?.insert_memory(item)
    }

    /// Pre-order from `root`: each cell's context becomes
    /// `α·incoming + (1−α)·existing`, and its children receive that result.
    pub fn broadcast_context(&mut self, root: CellId, context: &[f64], alpha: f64) -> Result<()> {
        ensure_dim("broadcast context", self.latent_dim, context.len())?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("blend weight must lie in [0, 1], got {alpha}")));
        }
        if !all_finite(context) {
            return Err(Error::NonFinite("broadcast context"));
        }
        self.cell(root)?;
        let mut stack = vec![(root, context.to_vec())];
        while let Some((id, incoming)) = stack.pop() {
            let cell = self.cell_mut(id)?;
            for (c, v) in cell.context.iter_mut().zip(&incoming) {
                *c = alpha * v + (1.0 - alpha) * *c;
            }
            let blended = cell.context.clone();
            stack.extend(cell.children.iter().rev().map(|&ch| (ch, blended.clone())));
        }
        Ok(())
    }

    /// Post-order summary of the subtree at `root`. A cell's summary reduces
    /// `[own buffer reduction, child summaries in order]`; an empty buffer
    /// reduces to zero.
    pub fn report_summary(&self, root: CellId, reduce: Reduce) -> Result<Vec<f64>> {
        self.cell(root)?;
        // Reverse pre-order visits every child before its parent.
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.cell(id)?.children.iter().rev());
        }
        let mut summaries: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
        for &id in order.iter().rev() {
            let cell = self.cell(id)?;
            let own = reduce.apply(self.latent_dim, cell.buffer());
            let mut parts = vec![own];
            for ch in &cell.children {
                parts.push(summaries.remove(ch).expect("child summarised first"));
            }
            let s = reduce.apply(self.latent_dim, parts.iter().map(Vec::as_slice));
            summaries.insert(id, s);
        }
        Ok(summaries.remove(&root).expect("root summarised"))
    }

    /// Checks capacity, parent/child agreement and acyclicity.
    pub fn check_invariants(&self) -> Result<()> {
        for cell in self.cells.values() {
            if cell.buffer.len() > cell.capacity {
                return Err(Error::InvalidArgument(format!("cell {} exceeds capacity", cell.id)));
            }
            ensure_dim("cell context", self.latent_dim, cell.context.len())?;
            for item in &cell.buffer {
                ensure_dim("memory item", self.latent_dim, item.len())?;
            }
            if let Some(p) = cell.parent {
                let pc = self.cell(p)?;
                if pc.children.iter().filter(|&&c| c == cell.id).count() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "cell {} names parent {p}, which does not list it",
                        cell.id
                    )));
                }
            }
            for &ch in &cell.children {
                if self.cell(ch)?.parent != Some(cell.id) {
                    return Err(Error::InvalidArgument(format!(
                        "cell {} lists child {ch} whose parent differs",
                        cell.id
                    )));
                }
            }
        }
        for &id in self.cells.keys() {
            let mut seen = vec![id];
            let mut cur = self.cells[&id].parent;
            while let Some(p) = cur {
                if seen.contains(&p) {
                    seen.push(p);
                    seen.reverse();
                    return Err(Error::Cycle { path: seen });
                }
                seen.push(p);
                cur = self.cell(p)?.parent;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            latent_dim: self.latent_dim,
            capacity: self.capacity,
            cells: self
                .cells
                .values()
                .map(|c| CellSnapshot {
                    id: c.id,
                    parent: c.parent,
                    children: c.children.clone(),
                    buffer: c.buffer.iter().cloned().collect(),
                    context: c.context.clone(),
                    bank: c.bank.as_deref().cloned(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: GraphSnapshot) -> Result<Self> {
        let mut g = CellGraph::new(snap.latent_dim, snap.capacity)?;
        for c in &snap.cells {
            g.add_cell(c.id)?;
        }
        for c in snap.cells {
            if c.buffer.len() > g.capacity {
                return Err(Error::InvalidArgument(format!("cell {} exceeds capacity", c.id)));
            }
            ensure_dim("cell context", g.latent_dim, c.context.len())?;
            let cell = g.cell_mut(c.id)?;
            cell.parent = c.parent;
            cell.children = c.children;
            cell.context = c.context;
            cell.bank = c.bank.map(Arc::new);
            for item in c.buffer {
                cell.insert_memory(item)?;
            }
        }
        g.check_invariants()?;
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_snapshot(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub latent_dim: usize,
    pub capacity: usize,
    pub cells: Vec<CellSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub id: CellId,
    pub parent: Option<CellId>,
    pub children: Vec<CellId>,
    pub buffer: Vec<Vec<f64>>,
    pub context: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<ExpertBank<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::ExpertPotential;

    fn chain(n: u32) -> CellGraph {
        let mut g = CellGraph::new(2, 4).unwrap();
        for i in 0..n {
            g.add_cell(i).unwrap();
        }
        for i in 1..n {
            g.add_child(i - 1, i).unwrap();
        }
        g
    }

    #[test]
    fn basic_edge() {
        let mut g = chain(0);
        g.add_cell(1).unwrap();
        g.add_cell(2).unwrap();
        g.add_child(1, 2).unwrap();
        assert_eq!(g.cell(1).unwrap().children(), &[2]);
        assert_eq!(g.cell(2).unwrap().parent(), Some(1));
        assert_eq!(g.roots(), vec![1]);
    }

    #[test]
    fn cycle_reports_path() {
        let mut g = chain(3);
        let err = g.add_child(2, 0).unwrap_err();
        assert_eq!(err, Error::Cycle { path: vec![0, 1, 2, 0] });
        assert_eq!(err.to_string(), "edge would create a cycle: 0->1->2->0");
        assert_eq!(g.add_child(1, 1).unwrap_err(), Error::Cycle { path: vec![1, 1] });
        g.check_invariants().unwrap();
    }

    #[test]
    fn second_parent_rejected() {
        let mut g = chain(2);
        g.add_cell(7).unwrap();
        assert_eq!(
            g.add_child(7, 1).unwrap_err(),
            Error::AlreadyParented { child: 1, parent: 0 }
        );
        assert_eq!(g.add_child(7, 9).unwrap_err(), Error::UnknownCell(9));
        assert_eq!(g.add_cell(7).unwrap_err(), Error::DuplicateCell(7));
    }

    #[test]
    fn fifo_eviction() {
        let mut g = CellGraph::new(1, 1).unwrap();
        g.add_cell(0).unwrap();
        g.insert_memory(0, vec![1.0]).unwrap();
        g.insert_memory(0, vec![2.0]).unwrap();
        let buf: Vec<&[f64]> = g.cell(0).unwrap().buffer().collect();
        assert_eq!(buf, vec![&[2.0][..]]);

        let mut g = CellGraph::new(1, 3).unwrap();
        g.add_cell(0).unwrap();
        for v in [1.0, 2.0, 3.0] {
            g.insert_memory(0, vec![v]).unwrap();
        }
        let buf: Vec<f64> = g.cell(0).unwrap().buffer().map(|x| x[0]).collect();
        assert_eq!(buf, vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            g.insert_memory(0, vec![1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn broadcast_halves_per_level() {
        let mut g = chain(3);
        let v = [4.0, -8.0];
        g.broadcast_context(0, &v, 0.5).unwrap();
        for k in 0..3u32 {
            let f = 0.5f64.powi(k as i32 + 1);
            assert_eq!(g.cell(k).unwrap().context(), &[v[0] * f, v[1] * f]);
        }
    }

    #[test]
    fn broadcast_extremes() {
        let mut g = chain(4);
        g.broadcast_context(1, &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(g.cell(0).unwrap().context(), &[0.0, 0.0]);
        for k in 1..4 {
            assert_eq!(g.cell(k).unwrap().context(), &[1.0, 2.0]);
        }
        let before = g.snapshot();
        g.broadcast_context(0, &[9.0, 9.0], 0.0).unwrap();
        assert_eq!(g.snapshot(), before);
        assert!(g.broadcast_context(0, &[1.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn summary_rules() {
        let mut g = CellGraph::new(2, 4).unwrap();
        g.add_cell(0).unwrap();
        g.insert_memory(0, vec![1.0, -1.0]).unwrap();
        for r in [Reduce::Mean, Reduce::Max, Reduce::Last] {
            assert_eq!(g.report_summary(0, r).unwrap(), vec![1.0, -1.0]);
        }

        let mut g = CellGraph::new(2, 4).unwrap();
        for i in 0..3 {
            g.add_cell(i).unwrap();
        }
        g.add_child(0, 1).unwrap();
        g.add_child(0, 2).unwrap();
        g.insert_memory(1, vec![3.0, 0.0]).unwrap();
        g.insert_memory(2, vec![0.0, 6.0]).unwrap();
        assert_eq!(g.report_summary(0, Reduce::Mean).unwrap(), vec![1.0, 2.0]);
        assert_eq!(g.report_summary(0, Reduce::Max).unwrap(), vec![3.0, 6.0]);
        assert_eq!(g.report_summary(0, Reduce::Last).unwrap(), vec![0.0, 6.0]);
    }

    #[test]
    fn detach_makes_root() {
        let mut g = chain(3);
        g.detach(1).unwrap();
        assert_eq!(g.roots(), vec![0, 1]);
        assert!(g.cell(0).unwrap().children().is_empty());
        g.add_child(2, 0).unwrap();
        g.check_invariants().unwrap();
    }

    #[test]
    fn snapshot_round_trip() {
        let mut g = chain(3);
        g.insert_memory(2, vec![0.5, 0.25]).unwrap();
        g.broadcast_context(0, &[1.0, 1.0], 0.3).unwrap();
        g.set_bank(1, Arc::new(ExpertBank::single(ExpertPotential::unit_quadratic(2)).unwrap()))
            .unwrap();
        let back = CellGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.snapshot(), g.snapshot());
    }

    #[test]
    fn snapshot_with_cycle_rejected() {
        let mut snap = chain(2).snapshot();
        snap.cells[0].parent = Some(1);
        snap.cells[1].children = vec![0];
        assert!(matches!(CellGraph::from_snapshot(snap), Err(Error::Cycle { .. })));
    }
}
