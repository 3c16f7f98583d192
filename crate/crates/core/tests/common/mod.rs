#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use dtinterview_core::session::ClientProfile;

/// Appendix questions, frozen as `category<TAB>question` rows in table order.
pub fn appendix_rows() -> Vec<(String, String)> {
    let raw = include_str!("../fixtures/appendix_a.tsv");
    raw.lines()
        .map(|line| {
            let (c, q) = line.split_once('\t').expect("tab-separated row");
            (c.to_owned(), q.to_owned())
        })
        .collect()
}

/// The same rows grouped per category, preserving table order.
pub fn appendix_by_category() -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (c, q) in appendix_rows() {
        out.entry(c).or_default().push(q);
    }
    out
}

pub fn profile() -> ClientProfile {
    ClientProfile {
        company_name: "Dudullu Fan Clutch Ltd".into(),
        client_name: "Ayse Demir".into(),
        industry_type: "automotive manufacturing".into(),
        industry_size: "50-249 employees".into(),
        job_title: "Production Director".into(),
    }
}

pub const FIXTURE_SESSION_ID: &str = "6f1c2a34-8e0b-4d7a-9c1e-2b5f7a9d0e11";

/// Installs the mid-interview supply fixture into a data directory.
pub fn install_supply_fixture(data_dir: &Path) {
    let sessions = data_dir.join("sessions");
    std::fs::create_dir_all(&sessions).unwrap();
    std::fs::write(
        sessions.join(format!("{FIXTURE_SESSION_ID}.json")),
        include_str!("../fixtures/session_supply_cursor7.json"),
    )
    .unwrap();
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap()
}
