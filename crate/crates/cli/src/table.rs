//! Tabular output for convergence studies: machine-readable CSV (full
//! `f64` precision, deterministic) and an aligned text table with
//! percentages for quick reading.

use cemwave::analysis::StudyRow;

/// CSV with one line per study level. Floats use shortest round-trip
/// formatting, so identical rows serialize to identical bytes.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("Nol,L,Nbf,coarse_dim,fine_dim,error_L2,error_DG,error_H1_broken\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.nol, r.l, r.nbf, r.coarse_dim, r.fine_dim, r.error_l2, r.error_dg, r.error_h1_broken
        ));
    }
    s
}

/// Human-readable table; relative errors are shown as percentages.
pub fn study_text(rows: &[StudyRow]) -> String {
    let headers = [
        "Nol", "L", "Nbf", "coarse dim", "fine dim", "L2 err (%)", "DG err (%)", "H1b err (%)",
    ];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.nol.to_string(),
                format!("{:.6}", r.l),
                r.nbf.to_string(),
                r.coarse_dim.to_string(),
                r.fine_dim.to_string(),
                format!("{:.4}", 100.0 * r.error_l2),
                format!("{:.4}", 100.0 * r.error_dg),
                format!("{:.4}", 100.0 * r.error_h1_broken),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cols: &[String]| -> String {
        let body: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        format!("| {} |\n", body.join(" | "))
    };
    let mut s = line(&headers.map(String::from));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    s.push_str(&line(&rule));
    for row in &cells {
        s.push_str(&line(row));
    }
    s
}
