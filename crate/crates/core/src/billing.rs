//! Net-metering settlement of houses and coalitions under time-of-use
//! prices, the closed-form coalition cost allocation, and checks of the
//! cooperative-game properties (core membership, subadditivity).
//!
//! Storage is ideal: fully discharged during the peak window and fully
//! recharged off-peak, every day, with no carry-over.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{DailyEnergy, FleetLedger, TariffSchedule};
use crate::topology::Scenario;

/// Absolute tolerance ($) for budget-balance, rationality and core checks.
pub const COST_TOLERANCE: f64 = 1e-9;

/// Largest coalition [`check_core`] enumerates exhaustively.
pub const MAX_CORE_HOUSES: usize = 16;

/// Daily energy position of a house or of a coalition (summed over members).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub peak_consumption: f64,
    pub offpeak_consumption: f64,
    pub peak_generation: f64,
    pub offpeak_generation: f64,
    pub storage: f64,
}

impl EnergyBalance {
    pub fn of(d: &DailyEnergy) -> Self {
        Self {
            peak_consumption: d.peak_consumption,
            offpeak_consumption: d.offpeak_consumption,
            peak_generation: d.peak_generation,
            offpeak_generation: d.offpeak_generation,
            storage: d.storage,
        }
    }

    pub fn total<'a>(ds: impl IntoIterator<Item = &'a DailyEnergy>) -> Self {
        ds.into_iter().fold(Self::default(), |acc, d| acc + Self::of(d))
    }

    /// Energy still needed during the peak window after storage and solar;
    /// negative when there is surplus to export.
    pub fn peak_deficit(&self) -> f64 {
        self.peak_consumption - self.storage - self.peak_generation
    }

    /// Off-peak need including the storage recharge; negative on surplus.
    pub fn offpeak_deficit(&self) -> f64 {
        self.offpeak_consumption + self.storage - self.offpeak_generation
    }

    /// Energy drawn from the utility grid over the day.
    pub fn grid_draw(&self) -> f64 {
        self.peak_deficit().max(0.0) + self.offpeak_deficit().max(0.0)
    }
}

impl std::ops::Add for EnergyBalance {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            peak_consumption: self.peak_consumption + o.peak_consumption,
            offpeak_consumption: self.offpeak_consumption + o.offpeak_consumption,
            peak_generation: self.peak_generation + o.peak_generation,
            offpeak_generation: self.offpeak_generation + o.offpeak_generation,
            storage: self.storage + o.storage,
        }
    }
}

/// Daily bill split into its four net-metering components ($).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub peak_buy: f64,
    pub peak_sell: f64,
    pub offpeak_buy: f64,
    pub offpeak_sell: f64,
    pub total: f64,
}

/// Net-metering bill of an energy position.
pub fn net_cost(balance: &EnergyBalance, tariff: &TariffSchedule) -> CostBreakdown {
    let peak = balance.peak_deficit();
    let offpeak = balance.offpeak_deficit();
    let peak_buy = tariff.peak_buy() * peak.max(0.0);
    let peak_sell = tariff.peak_sell() * (-peak).max(0.0);
    let offpeak_buy = tariff.offpeak_buy() * offpeak.max(0.0);
    let offpeak_sell = tariff.offpeak_sell() * (-offpeak).max(0.0);
    CostBreakdown {
        peak_buy,
        peak_sell,
        offpeak_buy,
        offpeak_sell,
        total: peak_buy - peak_sell + offpeak_buy - offpeak_sell,
    }
}

/// Daily cost of a house settling alone with the grid.
pub fn standalone_cost(d: &DailyEnergy, tariff: &TariffSchedule) -> CostBreakdown {
    net_cost(&EnergyBalance::of(d), tariff)
}

fn common_day(ds: &[DailyEnergy]) -> Result<Option<usize>> {
    let Some(first) = ds.first() else {
        return Ok(None);
    };
    if let Some(other) = ds.iter().find(|d| d.day != first.day) {
        return Err(Error::Input(format!(
            "coalition mixes day {} and day {}",
            first.day, other.day
        )));
    }
    Ok(Some(first.day))
}

/// Daily cost of a coalition settling its aggregate position with the grid.
/// An empty coalition costs nothing.
pub fn coalition_cost(ds: &[DailyEnergy], tariff: &TariffSchedule) -> Result<CostBreakdown> {
    common_day(ds)?;
    Ok(net_cost(&EnergyBalance::total(ds), tariff))
}

/// Which side of the grid each period of the coalition ends up on.
///
/// The letters follow the usual labelling of the four cases of the
/// allocation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AllocationBranch {
    /// Coalition imports in both periods.
    K,
    /// Peak surplus, off-peak import.
    L,
    /// Peak import, off-peak surplus.
    M,
    /// Surplus in both periods.
    N,
}

impl AllocationBranch {
    pub const ALL: [AllocationBranch; 4] = [Self::K, Self::L, Self::M, Self::N];

    /// Picks the branch from the aggregate position; equalities count as
    /// importing.
    pub fn select(agg: &EnergyBalance) -> Self {
        let peak_import = agg.peak_consumption >= agg.storage + agg.peak_generation;
        let offpeak_import = agg.offpeak_consumption + agg.storage >= agg.offpeak_generation;
        match (peak_import, offpeak_import) {
            (true, true) => Self::K,
            (false, true) => Self::L,
            (true, false) => Self::M,
            (false, false) => Self::N,
        }
    }

    /// Per-kWh rates applied to every member's peak and off-peak deficit.
    pub fn rates(self, tariff: &TariffSchedule) -> (f64, f64) {
        match self {
            Self::K => (tariff.peak_buy(), tariff.offpeak_buy()),
            Self::L => (tariff.peak_sell(), tariff.offpeak_buy()),
            Self::M => (tariff.peak_buy(), tariff.offpeak_sell()),
            Self::N => (tariff.peak_sell(), tariff.offpeak_sell()),
        }
    }
}

impl fmt::Display for AllocationBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One day's settlement of a coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub day: Option<usize>,
    /// Allocated cost per member, in input order.
    pub per_house: Vec<(String, f64)>,
    pub coalition_cost: f64,
    pub branch: AllocationBranch,
}

impl AllocationResult {
    pub fn allocated_total(&self) -> f64 {
        self.per_house.iter().map(|(_, c)| c).sum()
    }
}

/// Splits the coalition's daily cost among its members.
///
/// Every member is charged its own peak and off-peak deficit at the rates
/// the coalition as a whole faces: buy prices for a period in which the
/// coalition imports, sell prices for a period in which it exports.
pub fn allocate(ds: &[DailyEnergy], tariff: &TariffSchedule) -> Result<AllocationResult> {
    let day = common_day(ds)?;
    let agg = EnergyBalance::total(ds);
    let branch = AllocationBranch::select(&agg);
    let (peak_rate, offpeak_rate) = branch.rates(tariff);
    let per_house = ds
        .iter()
        .map(|d| {
            let b = EnergyBalance::of(d);
            (d.house_id.clone(), peak_rate * b.peak_deficit() + offpeak_rate * b.offpeak_deficit())
        })
        .collect();
    Ok(AllocationResult {
        day,
        per_house,
        coalition_cost: net_cost(&agg, tariff).total,
        branch,
    })
}

/// Daily kWh drawn from the utility grid by a coalition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridEnergySeries(Vec<f64>);

impl GridEnergySeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<GridEnergySeries> for Vec<f64> {
    fn from(s: GridEnergySeries) -> Self {
        s.0
    }
}

/// Grid draw of one coalition-day. With P2P the coalition nets its members
/// before touching the grid; without, each house draws its own deficit.
pub fn grid_draw(ds: &[DailyEnergy], p2p: bool) -> f64 {
    if p2p {
        EnergyBalance::total(ds).grid_draw()
    } else {
        ds.iter().map(|d| EnergyBalance::of(d).grid_draw()).sum()
    }
}

/// Grid draw per day for a coalition, one entry of `days` per day.
pub fn grid_energy(days: &[Vec<DailyEnergy>], p2p: bool) -> GridEnergySeries {
    GridEnergySeries(days.iter().map(|ds| grid_draw(ds, p2p)).collect())
}

/// Annual settlement of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub houses: usize,
    pub days: usize,
    /// Sum of every house's standalone daily cost.
    pub cost_without_p2p: f64,
    /// Sum of the coalition's daily cost.
    pub cost_with_p2p: f64,
    pub savings: f64,
    pub savings_pct: f64,
    pub grid_without_p2p: GridEnergySeries,
    pub grid_with_p2p: GridEnergySeries,
    /// Annual allocated cost per house.
    pub allocations: BTreeMap<String, f64>,
    /// Days settled under each allocation branch.
    pub branch_days: BTreeMap<AllocationBranch, usize>,
    /// Largest daily |allocated total - coalition cost|.
    pub max_budget_gap: f64,
}

/// Settles `scenario` day by day over the whole ledger and sums the results.
pub fn annual_summary(ledger: &FleetLedger, tariff: &TariffSchedule, scenario: &Scenario) -> Result<ScenarioSummary> {
    if ledger.days() == 0 || scenario.houses.is_empty() {
        return Err(Error::Input(format!(
            "scenario {} has no ledger to settle ({} days, {} houses)",
            scenario.name,
            ledger.days(),
            scenario.houses.len()
        )));
    }
    let mut summary = ScenarioSummary {
        scenario: scenario.name.clone(),
        houses: scenario.houses.len(),
        days: ledger.days(),
        cost_without_p2p: 0.0,
        cost_with_p2p: 0.0,
        savings: 0.0,
        savings_pct: 0.0,
        grid_without_p2p: GridEnergySeries::default(),
        grid_with_p2p: GridEnergySeries::default(),
        allocations: scenario.houses.iter().map(|h| (h.clone(), 0.0)).collect(),
        branch_days: AllocationBranch::ALL.iter().map(|&b| (b, 0)).collect(),
        max_budget_gap: 0.0,
    };
    for day in 0..ledger.days() {
        let ds = ledger.day_entries(&scenario.houses, day)?;
        summary.cost_without_p2p += ds.iter().map(|d| standalone_cost(d, tariff).total).sum::<f64>();
        let alloc = allocate(&ds, tariff)?;
        summary.cost_with_p2p += alloc.coalition_cost;
        summary.max_budget_gap = summary
            .max_budget_gap
            .max((alloc.allocated_total() - alloc.coalition_cost).abs());
        *summary.branch_days.entry(alloc.branch).or_default() += 1;
        for (house, xi) in &alloc.per_house {
            *summary.allocations.get_mut(house).expect("member of scenario") += xi;
        }
        summary.grid_without_p2p.0.push(grid_draw(&ds, false));
        summary.grid_with_p2p.0.push(grid_draw(&ds, true));
    }
    summary.savings = summary.cost_without_p2p - summary.cost_with_p2p;
    summary.savings_pct = if summary.cost_without_p2p == 0.0 {
        0.0
    } else {
        summary.savings / summary.cost_without_p2p * 100.0
    };
    Ok(summary)
}

/// Coalition that would rather leave than accept its allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreViolation {
    pub members: Vec<String>,
    pub allocated: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreVerdict {
    pub allocation: AllocationResult,
    /// |sum of allocations - grand coalition cost|.
    pub budget_gap: f64,
    pub coalitions_checked: usize,
    pub violation: Option<CoreViolation>,
}

impl CoreVerdict {
    pub fn in_core(&self) -> bool {
        self.budget_gap <= COST_TOLERANCE && self.violation.is_none()
    }
}

/// Checks the allocation of one day against every sub-coalition.
pub fn check_core(ds: &[DailyEnergy], tariff: &TariffSchedule) -> Result<CoreVerdict> {
    let n = ds.len();
    if n > MAX_CORE_HOUSES {
        return Err(Error::Capability(format!(
            "core check enumerates 2^n coalitions; n = {n} exceeds {MAX_CORE_HOUSES}"
        )));
    }
    let allocation = allocate(ds, tariff)?;
    let budget_gap = (allocation.allocated_total() - allocation.coalition_cost).abs();

    // Subset sums built from the subset without its lowest member.
    let subsets = 1usize << n;
    let mut balance = vec![EnergyBalance::default(); subsets];
    let mut allocated = vec![0.0f64; subsets];
    let mut violation = None;
    for mask in 1..subsets {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        balance[mask] = balance[rest] + EnergyBalance::of(&ds[low]);
        allocated[mask] = allocated[rest] + allocation.per_house[low].1;
        let cost = net_cost(&balance[mask], tariff).total;
        if allocated[mask] > cost + COST_TOLERANCE && violation.is_none() {
            violation = Some(CoreViolation {
                members: (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| ds[i].house_id.clone())
                    .collect(),
                allocated: allocated[mask],
                cost,
            });
        }
    }
    Ok(CoreVerdict {
        allocation,
        budget_gap,
        coalitions_checked: subsets - 1,
        violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityVerdict {
    pub cost_first: f64,
    pub cost_second: f64,
    pub cost_union: f64,
}

impl SubadditivityVerdict {
    pub fn holds(&self) -> bool {
        self.cost_first + self.cost_second >= self.cost_union - COST_TOLERANCE
    }
}

/// Compares two disjoint coalitions settling apart versus together.
pub fn check_subadditivity(
    first: &[DailyEnergy],
    second: &[DailyEnergy],
    tariff: &TariffSchedule,
) -> Result<SubadditivityVerdict> {
    let ids: BTreeSet<&str> = first.iter().map(|d| d.house_id.as_str()).collect();
    if let Some(d) = second.iter().find(|d| ids.contains(d.house_id.as_str())) {
        return Err(Error::Input(format!("house {} is in both coalitions", d.house_id)));
    }
    let union: Vec<DailyEnergy> = first.iter().chain(second).cloned().collect();
    let cost_union = coalition_cost(&union, tariff)?.total;
    Ok(SubadditivityVerdict {
        cost_first: coalition_cost(first, tariff)?.total,
        cost_second: coalition_cost(second, tariff)?.total,
        cost_union,
    })
}
