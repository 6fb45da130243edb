//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use bubbletower::ansatz::AnsatzState;
use bubbletower::corrector::{solve_phibar, CorrectorSolution};
use bubbletower::{build_constant_table, AnalyticParams, ConstantTable, Result};

/// Default table for n = 7 and tower height `k`.
pub fn table(k: usize) -> Result<ConstantTable> {
    build_constant_table(7, k, AnalyticParams::defaults(7))
}

/// Table, corrector and the leading-order state at time `t`.
pub fn state(k: usize, t: f64) -> Result<(ConstantTable, Arc<CorrectorSolution>, AnsatzState)> {
    let table = table(k)?;
    let phibar = Arc::new(solve_phibar(&table, 2000)?);
    let st = AnsatzState::leading_order(&table, phibar.clone(), t)?;
    Ok((table, phibar, st))
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        let (t, _, st) = super::state(2, -1e4).unwrap();
        assert_eq!(t.k, 2);
        assert!(st.mu[1] < st.mu[0]);
    }
}
