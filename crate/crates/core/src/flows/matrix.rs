//! Flow-matrix rendering: per service, level-2 categories against trace
//! categories and destination labels, with platform-presence marks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::destinations::DestLabel;
use crate::ingest::Platform;
use crate::ontology::Ontology;

use super::{platform_presence, DataFlow, PresenceMark, TraceCategory};

/// Cell symbols: observed on both platforms, website only, mobile only,
/// not observed.
pub const MARK_BOTH: &str = "•";
pub const MARK_WEB: &str = "w";
pub const MARK_MOBILE: &str = "m";
pub const MARK_ABSENT: &str = "—";

impl PresenceMark {
    pub fn symbol(self) -> &'static str {
        match self {
            PresenceMark::Both => MARK_BOTH,
            PresenceMark::WebOnly => MARK_WEB,
            PresenceMark::MobileOnly => MARK_MOBILE,
            PresenceMark::Absent => MARK_ABSENT,
        }
    }
}

const COLUMNS: [(DestLabel, &str); 4] = [
    (DestLabel::First, "Collect 1st"),
    (DestLabel::FirstAts, "Collect 1st ATS"),
    (DestLabel::Third, "Share 3rd"),
    (DestLabel::ThirdAts, "Share 3rd ATS"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub trace_category: TraceCategory,
    pub dest_label: DestLabel,
    pub mark: PresenceMark,
    pub symbol: String,
    /// Raw platform union behind the mark (desktop listed separately even
    /// though it counts toward the web mark).
    pub platforms: Vec<Platform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub category2: String,
    pub cells: Vec<MatrixCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceMatrix {
    pub service: String,
    pub rows: Vec<MatrixRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub legend: BTreeMap<String, String>,
    pub services: Vec<ServiceMatrix>,
}

/// Render merged flows as the per-service matrix, one row per level-2
/// category (zero rows included), columns grouped by trace category.
pub fn render_matrix(flows: &[DataFlow], ont: &Ontology) -> MatrixReport {
    let presence = platform_presence(flows);
    let mut services: Vec<String> = flows.iter().map(|f| f.service.clone()).collect();
    services.sort();
    services.dedup();

    let mut out = Vec::new();
    for service in services {
        let mut rows = Vec::new();
        for category2 in ont.level2_names() {
            let mut cells = Vec::new();
            for trace_category in TraceCategory::ALL {
                for (dest_label, _) in COLUMNS {
                    let key = (
                        service.clone(),
                        trace_category,
                        category2.to_string(),
                        dest_label,
                    );
                    let (mark, platforms) = presence
                        .get(&key)
                        .map(|(m, p)| (*m, p.iter().copied().collect()))
                        .unwrap_or((PresenceMark::Absent, Vec::new()));
                    cells.push(MatrixCell {
                        trace_category,
                        dest_label,
                        mark,
                        symbol: mark.symbol().to_string(),
                        platforms,
                    });
                }
            }
            rows.push(MatrixRow { category2: category2.to_string(), cells });
        }
        out.push(ServiceMatrix { service, rows });
    }

    let legend = BTreeMap::from([
        (MARK_BOTH.to_string(), "data flow observed on both website and mobile".to_string()),
        (MARK_WEB.to_string(), "data flow observed only on website platform".to_string()),
        (MARK_MOBILE.to_string(), "data flow observed only on mobile platform".to_string()),
        (MARK_ABSENT.to_string(), "data flow not observed on either platform".to_string()),
    ]);
    MatrixReport { legend, services: out }
}

impl MatrixReport {
    /// Aligned text grid with one header per trace category and the four
    /// destination columns under each.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (idx, service) in self.services.iter().enumerate() {
            if idx > 0 {
                out.push('\n');
            }
            out.push_str(&format!("Service: {}\n", service.service));

            let mut grid: Vec<Vec<String>> = Vec::new();
            let mut group_header = vec![String::new()];
            for category in TraceCategory::ALL {
                for (i, _) in COLUMNS.iter().enumerate() {
                    group_header.push(if i == 0 {
                        category.as_str().to_string()
                    } else {
                        String::new()
                    });
                }
            }
            grid.push(group_header);
            let mut header = vec!["Data Type".to_string()];
            for _ in TraceCategory::ALL {
                for (_, name) in COLUMNS {
                    header.push(name.to_string());
                }
            }
            grid.push(header);
            for row in &service.rows {
                let mut line = vec![row.category2.clone()];
                for cell in &row.cells {
                    line.push(cell.symbol.clone());
                }
                grid.push(line);
            }
            out.push_str(&render_header_grid(&grid));
        }
        out.push('\n');
        out.push_str("Legend: ");
        let legend: Vec<String> =
            self.legend.iter().map(|(sym, text)| format!("{sym} = {text}")).collect();
        out.push_str(&legend.join("; "));
        out.push('\n');
        out.push_str(
            "Note: destinations that are both first party and blocklisted count only toward the ATS column.\n",
        );
        out
    }
}

// Like report::render_grid but with two header rows before the rule.
fn render_header_grid(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (idx, row) in rows.iter().enumerate() {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            let pad = widths[i].saturating_sub(cell.chars().count());
            line.push_str(cell);
            if i + 1 < row.len() {
                line.push_str(&" ".repeat(pad));
                line.push_str("  ");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if idx == 1 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (columns.saturating_sub(1));
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
