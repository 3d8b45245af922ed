use anyhow::Result;
use svafd::protocol::{run_campaign, CellResult};

use crate::config::ExperimentConfig;
use crate::csvout::CsvDoc;

pub const TABLE_ERROR_SCHEMA: &str = "svafd.table_error/1";

/// Mean `log10` relative error of every `(N, K, T)` cell.
pub fn table_error(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    Ok(run_campaign(&cfg.campaign())?)
}

/// Rows `N`, one column per `(K, T)` pair, cells with two decimals or `N/A`.
pub fn render_table_error(cells: &[CellResult]) -> Result<String> {
    let mut ns: Vec<usize> = cells.iter().map(|c| c.cell.n).collect();
    let mut kts: Vec<(usize, usize)> = cells.iter().map(|c| (c.cell.k, c.cell.t)).collect();
    ns.sort();
    ns.dedup();
    kts.sort();
    kts.dedup();
    let names: Vec<String> = kts.iter().map(|(k, t)| format!("k{k}_t{t}")).collect();
    let header: Vec<&str> = std::iter::once("n").chain(names.iter().map(String::as_str)).collect();
    let mut doc = CsvDoc::new(TABLE_ERROR_SCHEMA, &header)?;
    for n in ns {
        let row = std::iter::once(n.to_string()).chain(kts.iter().map(|&(k, t)| {
            cells
                .iter()
                .find(|c| c.cell.n == n && c.cell.k == k && c.cell.t == t)
                .map_or_else(|| "N/A".to_string(), CellResult::display)
        }));
        doc.row(row.collect::<Vec<_>>())?;
    }
    doc.finish()
}
