use std::collections::{BTreeMap, BTreeSet};

use super::embedding::LoadVector;
use super::request::RequestId;
use super::substrate::{ElementId, SubstrateNetwork};
use super::ModelError;

/// True iff every element keeps a non-negative residual after adding `loads`.
pub fn check_substrate_fit(loads: &LoadVector, residual: &[f64]) -> bool {
    loads.iter().all(|&(e, v)| v <= residual[e.index()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveAllocation {
    pub loads: LoadVector,
    /// First slot in which the request is gone.
    pub departs: u32,
    /// Resource cost per slot while held.
    pub slot_cost: f64,
}

/// Current per-element load of all active allocations.
///
/// The fit test and the stored update are the same floating-point sum, so a
/// load that passed [`LoadLedger::fits`] never exceeds capacity afterwards.
#[derive(Debug, Clone)]
pub struct LoadLedger {
    capacity: Vec<f64>,
    unit_cost: Vec<f64>,
    load: Vec<f64>,
    contributors: Vec<BTreeSet<RequestId>>,
    active: BTreeMap<RequestId, ActiveAllocation>,
    departures: BTreeMap<u32, Vec<RequestId>>,
    cost_history: Vec<f64>,
}

impl LoadLedger {
    pub fn new(substrate: &SubstrateNetwork) -> Self {
        let n = substrate.element_count();
        LoadLedger {
            capacity: substrate.capacities().to_vec(),
            unit_cost: substrate.unit_costs().to_vec(),
            load: vec![0.0; n],
            contributors: vec![BTreeSet::new(); n],
            active: BTreeMap::new(),
            departures: BTreeMap::new(),
            cost_history: Vec::new(),
        }
    }

    pub fn load(&self, e: ElementId) -> f64 {
        self.load[e.index()]
    }

    pub fn loads(&self) -> &[f64] {
        &self.load
    }

    pub fn capacity(&self, e: ElementId) -> f64 {
        self.capacity[e.index()]
    }

    pub fn residual(&self, e: ElementId) -> f64 {
        self.capacity[e.index()] - self.load[e.index()]
    }

    /// `C(s) - load(s)` for every element; a negative entry is an invariant
    /// violation.
    pub fn substrate_residual(&self) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(self.load.len());
        for (i, (&c, &l)) in self.capacity.iter().zip(&self.load).enumerate() {
            let residual = c - l;
            if residual < 0.0 {
                return Err(ModelError::NegativeResidual {
                    element: ElementId(i as u32),
                    residual,
                });
            }
            out.push(residual);
        }
        Ok(out)
    }

    pub fn fits(&self, loads: &LoadVector) -> bool {
        loads
            .iter()
            .all(|&(e, v)| self.load[e.index()] + v <= self.capacity[e.index()])
    }

    /// Elements that would overflow, with the amount that must be freed on
    /// each for `loads` to fit.
    pub fn deficits(&self, loads: &LoadVector) -> Vec<(ElementId, f64)> {
        loads
            .iter()
            .filter_map(|&(e, v)| {
                let over = self.load[e.index()] + v - self.capacity[e.index()];
                (over > 0.0).then_some((e, over))
            })
            .collect()
    }

    /// Whether `loads` would fit after removing `victims` in order, using the
    /// same arithmetic as [`remove`](Self::remove).
    pub fn fits_after_removing(&self, victims: &[RequestId], loads: &LoadVector) -> bool {
        let mut touched: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for id in victims {
            let Some(alloc) = self.active.get(id) else { continue };
            for &(e, v) in &alloc.loads {
                let i = e.index();
                let entry = touched
                    .entry(i)
                    .or_insert((self.load[i], self.contributors[i].len()));
                entry.1 -= 1;
                entry.0 = if entry.1 == 0 { 0.0 } else { (entry.0 - v).max(0.0) };
            }
        }
        loads.iter().all(|&(e, v)| {
            let i = e.index();
            let base = touched.get(&i).map_or(self.load[i], |t| t.0);
            base + v <= self.capacity[i]
        })
    }

    pub fn allocate(
        &mut self,
        id: RequestId,
        loads: LoadVector,
        departs: u32,
    ) -> Result<(), ModelError> {
        if self.active.contains_key(&id) {
            return Err(ModelError::DoubleAllocation(id));
        }
        if let Some(&(e, v)) = loads
            .iter()
            .find(|&&(e, v)| self.load[e.index()] + v > self.capacity[e.index()])
        {
            return Err(ModelError::CapacityViolation {
                element: e,
                load: self.load[e.index()] + v,
                capacity: self.capacity[e.index()],
            });
        }
        let mut slot_cost = 0.0;
        for &(e, v) in &loads {
            self.load[e.index()] += v;
            self.contributors[e.index()].insert(id);
            slot_cost += v * self.unit_cost[e.index()];
        }
        self.departures.entry(departs).or_default().push(id);
        self.active.insert(
            id,
            ActiveAllocation {
                loads,
                departs,
                slot_cost,
            },
        );
        Ok(())
    }

    pub fn remove(&mut self, id: RequestId) -> Result<ActiveAllocation, ModelError> {
        let alloc = self.active.remove(&id).ok_or(ModelError::NotAllocated(id))?;
        for &(e, v) in &alloc.loads {
            let users = &mut self.contributors[e.index()];
            users.remove(&id);
            // Reset rather than subtract the last user so round-off never
            // accumulates on an idle element.
            self.load[e.index()] = if users.is_empty() {
                0.0
            } else {
                (self.load[e.index()] - v).max(0.0)
            };
        }
        if let Some(ids) = self.departures.get_mut(&alloc.departs) {
            ids.retain(|r| *r != id);
            if ids.is_empty() {
                self.departures.remove(&alloc.departs);
            }
        }
        Ok(alloc)
    }

    /// Removes every allocation whose departure slot is `<= t`, in departure
    /// then allocation order.
    pub fn release_departures(&mut self, t: u32) -> Vec<(RequestId, ActiveAllocation)> {
        let due: Vec<u32> = self.departures.range(..=t).map(|(k, _)| *k).collect();
        let mut out = Vec::new();
        for slot in due {
            let ids = self.departures.remove(&slot).unwrap_or_default();
            for id in ids {
                let alloc = self.remove(id).expect("departure index out of sync");
                out.push((id, alloc));
            }
        }
        out
    }

    pub fn is_active(&self, id: RequestId) -> bool {
        self.active.contains_key(&id)
    }

    pub fn allocation(&self, id: RequestId) -> Option<&ActiveAllocation> {
        self.active.get(&id)
    }

    pub fn active(&self) -> impl Iterator<Item = (&RequestId, &ActiveAllocation)> {
        self.active.iter()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Active requests currently loading `e`, in id order.
    pub fn contributors(&self, e: ElementId) -> &BTreeSet<RequestId> {
        &self.contributors[e.index()]
    }

    /// Loads summed from scratch over the active allocations.
    pub fn recompute(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.load.len()];
        for alloc in self.active.values() {
            for &(e, v) in &alloc.loads {
                load[e.index()] += v;
            }
        }
        load
    }

    /// Compares incremental loads with [`recompute`](Self::recompute) and the
    /// capacity bound. `rel_tol` is relative to capacity.
    pub fn check_consistency(&self, rel_tol: f64) -> Result<(), ModelError> {
        let fresh = self.recompute();
        for (i, (&a, &b)) in self.load.iter().zip(&fresh).enumerate() {
            let element = ElementId(i as u32);
            if a > self.capacity[i] {
                return Err(ModelError::CapacityViolation {
                    element,
                    load: a,
                    capacity: self.capacity[i],
                });
            }
            let scale = self.capacity[i].max(b.abs()).max(1.0);
            if (a - b).abs() > rel_tol * scale {
                return Err(ModelError::InvalidSubstrate(format!(
                    "ledger drift on element {}: incremental {a}, recomputed {b}",
                    element.0
                )));
            }
        }
        Ok(())
    }

    /// Current per-slot resource cost `sum_s load(s) c(s)`.
    pub fn current_cost(&self) -> f64 {
        self.load
            .iter()
            .zip(&self.unit_cost)
            .map(|(l, c)| l * c)
            .sum()
    }

    /// Records the cost of the slot that just finished processing.
    pub fn close_slot(&mut self) -> f64 {
        let cost = self.current_cost();
        self.cost_history.push(cost);
        cost
    }

    pub fn cost_history(&self) -> &[f64] {
        &self.cost_history
    }
}
