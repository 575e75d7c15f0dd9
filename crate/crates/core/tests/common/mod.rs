#![allow(dead_code)]

use chiller_tes::trace::{HourlyRecord, Trace};

/// Published sizing rows: `(c_ch, e_max, capex, f_elec, opex, lcc)`.
pub const SIZING_TABLE: [(f64, f64, f64, f64, f64, f64); 10] = [
    (
        400.0,
        4000.0,
        8_564_000.0,
        1_651_089.0,
        26_966_246.0,
        35_530_246.0,
    ),
    (
        400.0,
        5000.0,
        10_064_000.0,
        1_652_475.0,
        27_727_844.0,
        37_791_844.0,
    ),
    (
        500.0,
        2500.0,
        6_955_000.0,
        1_681_436.0,
        26_587_487.0,
        33_542_487.0,
    ),
    (
        500.0,
        3000.0,
        7_705_000.0,
        1_679_208.0,
        26_928_082.0,
        34_633_082.0,
    ),
    (
        600.0,
        2500.0,
        7_596_000.0,
        1_691_881.0,
        27_048_571.0,
        34_644_571.0,
    ),
    (
        600.0,
        3000.0,
        8_346_000.0,
        1_693_245.0,
        27_438_606.0,
        35_784_606.0,
    ),
    (
        700.0,
        1500.0,
        6_737_000.0,
        1_694_901.0,
        26_664_922.0,
        33_401_922.0,
    ),
    (
        700.0,
        1800.0,
        7_187_000.0,
        1_695_479.0,
        26_895_628.0,
        34_082_628.0,
    ),
    (
        800.0,
        1500.0,
        7_378_000.0,
        1_706_271.0,
        27_138_726.0,
        34_516_726.0,
    ),
    (
        800.0,
        1800.0,
        7_828_000.0,
        1_702_970.0,
        27_316_053.0,
        35_144_053.0,
    ),
];

/// Single-source trace of `(load, price)` hours starting at midnight of day 1.
pub fn hourly_trace(rows: &[(f64, f64)]) -> Trace {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(load, price))| HourlyRecord {
            day: 1 + (i / 24) as u16,
            hour: (i % 24) as u8,
            load,
            prices: vec![price],
            availability: vec![true],
            t_chw: None,
            t_cond: None,
        })
        .collect();
    Trace::new(records, "test").unwrap()
}

/// One day with a cheap night and an expensive working day whose afternoon
/// load exceeds a 600 kWh_th chiller.
pub fn two_band_day() -> Trace {
    let rows: Vec<(f64, f64)> = (0..24)
        .map(|h| {
            let price = if (8..18).contains(&h) { 10.0 } else { 4.0 };
            let load = match h {
                0..=7 => 200.0,
                8..=11 => 500.0,
                12..=17 => 800.0,
                _ => 300.0,
            };
            (load, price)
        })
        .collect();
    hourly_trace(&rows)
}

/// Row layout written to a CSV for the `lcc` command.
pub fn sizing_table_csv() -> String {
    let mut s = String::from("c_ch,e_max,f_elec\n");
    for (c, e, _, f, _, _) in SIZING_TABLE {
        s += &format!("{c},{e},{f}\n");
    }
    s
}
