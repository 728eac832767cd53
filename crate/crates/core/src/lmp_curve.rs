//! LMP-vs-load step curves.
//!
//! An LMP table lists load boundaries and the price that holds from each
//! boundary up to the next. The final row is a terminator: it carries the
//! maximal load `d_max` and must repeat the preceding price. Intervals that
//! share an identical price are grouped into one *price level* whose region
//! is the (possibly disconnected) union of those intervals; the level index
//! is what the MDP state stores.

use std::io::Read;
use std::path::Path;

use crate::{Error, Result};

/// One bus column of an LMP-vs-load table, as read from the source.
#[derive(Debug, Clone, PartialEq)]
pub struct LmpTable {
    pub bus_id: String,
    /// Load boundaries in MW, strictly increasing, starting at 0.
    pub boundaries: Vec<f64>,
    /// Price in $/MWh per boundary row.
    pub prices: Vec<f64>,
}

impl LmpTable {
    pub fn new(bus_id: impl Into<String>, boundaries: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::invalid("boundaries", "need at least 2 rows"));
        }
        if boundaries.len() != prices.len() {
            return Err(Error::invalid(
                "prices",
                format!(
                    "{} prices for {} boundary rows",
                    prices.len(),
                    boundaries.len()
                ),
            ));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::invalid(
                "boundaries",
                format!("first boundary must be 0, got {}", boundaries[0]),
            ));
        }
        for &b in &boundaries {
            if !b.is_finite() {
                return Err(Error::invalid("boundaries", format!("load {b} not finite")));
            }
        }
        for w in boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "boundaries",
                    format!("load column not strictly increasing at {} -> {}", w[0], w[1]),
                ));
            }
        }
        for &p in &prices {
            if p <= 0.0 || !p.is_finite() {
                return Err(Error::invalid("prices", format!("price {p} not positive")));
            }
        }
        Ok(LmpTable {
            bus_id: bus_id.into(),
            boundaries,
            prices,
        })
    }

    /// Parses a CSV table with a leading `load_mw` column and one column per
    /// bus. Returns one table per bus, in column order.
    pub fn parse_csv(reader: impl Read) -> Result<Vec<LmpTable>> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::Parse(
                "need a load column and at least one price column".into(),
            ));
        }
        let bus_ids: Vec<String> = headers.iter().skip(1).map(|h| h.to_string()).collect();

        let mut boundaries = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); bus_ids.len()];
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() != headers.len() {
                return Err(Error::Parse(format!(
                    "row {}: {} cells, expected {}",
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            let mut cells = record.iter();
            let load = parse_cell(cells.next().unwrap(), line, "load_mw")?;
            boundaries.push(load);
            for (col, cell) in columns.iter_mut().zip(cells) {
                col.push(parse_cell(cell, line, "price")?);
            }
        }

        bus_ids
            .into_iter()
            .zip(columns)
            .map(|(bus, prices)| LmpTable::new(bus, boundaries.clone(), prices))
            .collect()
    }

    pub fn parse_csv_path(path: impl AsRef<Path>) -> Result<Vec<LmpTable>> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::parse_csv(file)
    }
}

fn parse_cell(cell: &str, line: usize, what: &str) -> Result<f64> {
    cell.parse::<f64>()
        .map_err(|_| Error::Parse(format!("row {}: non-numeric {what} cell {cell:?}", line + 2)))
}

/// A source interval `[lo, hi)` with its price (the last interval of a curve
/// is closed at `d_max`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveInterval {
    pub lo: f64,
    pub hi: f64,
    pub price: f64,
}

/// A distinct price with its load region.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceLevel {
    pub price: f64,
    /// Maximal connected pieces `(lo, hi)` of the region, in load order.
    pub pieces: Vec<(f64, f64)>,
    /// Total region length in MW.
    pub length: f64,
}

/// A step curve from load to price level, with equal-price intervals grouped.
#[derive(Debug, Clone, PartialEq)]
pub struct LmpCurve {
    bus_id: String,
    d_max: f64,
    intervals: Vec<CurveInterval>,
    levels: Vec<PriceLevel>,
    /// Level index per interval.
    interval_level: Vec<usize>,
}

impl LmpCurve {
    /// Builds a curve from a table. The final row is consumed as `d_max` and
    /// must repeat the preceding row's price.
    pub fn from_table(table: &LmpTable) -> Result<Self> {
        let m = table.boundaries.len();
        if table.prices[m - 1] != table.prices[m - 2] {
            return Err(Error::invalid(
                "prices",
                format!(
                    "final row price {} differs from preceding {}; last row must terminate the curve",
                    table.prices[m - 1],
                    table.prices[m - 2]
                ),
            ));
        }
        let intervals: Vec<CurveInterval> = (0..m - 1)
            .map(|k| CurveInterval {
                lo: table.boundaries[k],
                hi: table.boundaries[k + 1],
                price: table.prices[k],
            })
            .collect();
        Self::from_intervals(&table.bus_id, &intervals)
    }

    /// Builds a curve from its interval dump. Intervals must partition
    /// `[0, d_max)` in order.
    pub fn from_intervals(bus_id: &str, intervals: &[CurveInterval]) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::invalid("intervals", "empty interval list"));
        }
        if intervals[0].lo != 0.0 {
            return Err(Error::invalid(
                "intervals",
                format!("first interval starts at {}, not 0", intervals[0].lo),
            ));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if !iv.lo.is_finite() || !iv.hi.is_finite() || iv.hi <= iv.lo {
                return Err(Error::invalid(
                    "intervals",
                    format!("zero-length interval [{}, {})", iv.lo, iv.hi),
                ));
            }
            if iv.price <= 0.0 || !iv.price.is_finite() {
                return Err(Error::invalid(
                    "intervals",
                    format!("price {} not positive", iv.price),
                ));
            }
            if k + 1 < intervals.len() && intervals[k + 1].lo != iv.hi {
                return Err(Error::invalid(
                    "intervals",
                    format!("gap between {} and {}", iv.hi, intervals[k + 1].lo),
                ));
            }
        }
        let d_max = intervals[intervals.len() - 1].hi;

        // Group by exact price equality, level index in order of first
        // appearance; merge contiguous pieces within a level.
        let mut levels: Vec<PriceLevel> = Vec::new();
        let mut interval_level = Vec::with_capacity(intervals.len());
        for iv in intervals {
            let idx = match levels.iter().position(|l| l.price == iv.price) {
                Some(idx) => {
                    let level = &mut levels[idx];
                    match level.pieces.last_mut() {
                        Some(last) if last.1 == iv.lo => last.1 = iv.hi,
                        _ => level.pieces.push((iv.lo, iv.hi)),
                    }
                    idx
                }
                None => {
                    levels.push(PriceLevel {
                        price: iv.price,
                        pieces: vec![(iv.lo, iv.hi)],
                        length: 0.0,
                    });
                    levels.len() - 1
                }
            };
            interval_level.push(idx);
        }
        for level in &mut levels {
            level.length = level.pieces.iter().map(|(lo, hi)| hi - lo).sum();
        }

        Ok(LmpCurve {
            bus_id: bus_id.to_string(),
            d_max,
            intervals: intervals.to_vec(),
            levels,
            interval_level,
        })
    }

    pub fn bus_id(&self) -> &str {
        &self.bus_id
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Number of distinct price levels.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[PriceLevel] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &PriceLevel {
        &self.levels[i]
    }

    pub fn price(&self, i: usize) -> f64 {
        self.levels[i].price
    }

    /// Source intervals, ungrouped.
    pub fn intervals(&self) -> &[CurveInterval] {
        &self.intervals
    }

    /// Region length of each level divided by `d_max`: the level distribution
    /// of a load drawn uniformly on `[0, d_max]`.
    pub fn region_weights(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.length / self.d_max).collect()
    }

    /// Index of the level whose region contains `load`. Boundary loads belong
    /// to the interval they open; `load == d_max` belongs to the last one.
    pub fn price_of_load(&self, load: f64) -> Result<usize> {
        if !(0.0..=self.d_max).contains(&load) {
            return Err(Error::invalid(
                "load",
                format!("{load} outside [0, {}]", self.d_max),
            ));
        }
        // Last interval whose lo <= load.
        let k = self
            .intervals
            .partition_point(|iv| iv.lo <= load)
            .saturating_sub(1);
        Ok(self.interval_level[k])
    }

    /// Level index of the first interval whose price equals `price` exactly.
    pub fn level_of_price(&self, price: f64) -> Option<usize> {
        self.levels.iter().position(|l| l.price == price)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PJM_CSV: &str = "\
load_mw,A,B,C,D,E
0.00,10.00,10.00,10.00,10.00,10.00
600.00,14.00,14.00,14.00,14.00,14.00
640.00,15.00,15.00,15.00,15.00,15.00
711.81,15.00,21.74,24.33,31.46,10.00
742.80,15.83,23.68,26.70,35.00,10.00
963.94,15.24,28.18,30.00,35.00,10.00
1137.02,16.98,26.38,30.00,39.94,10.00
1484.06,16.98,26.38,30.00,39.94,10.00
";

    fn pjm_tables() -> Vec<LmpTable> {
        LmpTable::parse_csv(PJM_CSV.as_bytes()).unwrap()
    }

    fn pjm_curve(bus: &str) -> LmpCurve {
        let table = pjm_tables().into_iter().find(|t| t.bus_id == bus).unwrap();
        LmpCurve::from_table(&table).unwrap()
    }

    #[test]
    fn parses_pjm_bus_a() {
        let tables = pjm_tables();
        assert_eq!(tables.len(), 5);
        let a = &tables[0];
        assert_eq!(a.bus_id, "A");
        assert_eq!(
            a.boundaries,
            vec![0.0, 600.0, 640.0, 711.81, 742.80, 963.94, 1137.02, 1484.06]
        );
        assert_eq!(
            a.prices,
            vec![10.0, 14.0, 15.0, 15.0, 15.83, 15.24, 16.98, 16.98]
        );
    }

    #[test]
    fn two_row_constant_table_is_valid() {
        let t = LmpTable::new("X", vec![0.0, 100.0], vec![10.0, 10.0]).unwrap();
        let curve = LmpCurve::from_table(&t).unwrap();
        assert_eq!(curve.num_levels(), 1);
        assert_eq!(curve.level(0).pieces, vec![(0.0, 100.0)]);
        assert_eq!(curve.d_max(), 100.0);
    }

    #[test]
    fn non_monotone_load_column_rejected() {
        let err = LmpTable::new("X", vec![0.0, 600.0, 500.0], vec![1.0, 2.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput { field: "boundaries", .. }));
    }

    #[test]
    fn non_numeric_cell_rejected() {
        let src = "load_mw,A\n0,10\nsix hundred,14\n700,14\n";
        assert!(matches!(
            LmpTable::parse_csv(src.as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn single_row_rejected() {
        let src = "load_mw,A\n0,10\n";
        assert!(LmpTable::parse_csv(src.as_bytes()).is_err());
    }

    #[test]
    fn bus_a_grouping() {
        let curve = pjm_curve("A");
        assert_eq!(curve.d_max(), 1484.06);
        assert_eq!(curve.intervals().len(), 7);
        assert_eq!(curve.num_levels(), 6);
        let prices: Vec<f64> = curve.levels().iter().map(|l| l.price).collect();
        assert_eq!(prices, vec![10.0, 14.0, 15.0, 15.83, 15.24, 16.98]);
        let fifteen = curve.level(curve.level_of_price(15.0).unwrap());
        assert_eq!(fifteen.pieces, vec![(640.0, 742.80)]);
        assert!((fifteen.length - 102.80).abs() < 1e-9);
    }

    #[test]
    fn bus_d_level_spans_two_intervals() {
        let curve = pjm_curve("D");
        let prices: Vec<f64> = curve.levels().iter().map(|l| l.price).collect();
        assert_eq!(prices, vec![10.0, 14.0, 15.0, 31.46, 35.0, 39.94]);
        let thirty_five = curve.level(curve.level_of_price(35.0).unwrap());
        assert_eq!(thirty_five.pieces, vec![(742.80, 1137.02)]);
    }

    #[test]
    fn bus_e_has_disconnected_level() {
        let curve = pjm_curve("E");
        assert_eq!(curve.num_levels(), 3);
        let ten = curve.level(curve.level_of_price(10.0).unwrap());
        assert_eq!(ten.pieces, vec![(0.0, 600.0), (711.81, 1484.06)]);
        assert!((ten.length - (600.0 + (1484.06 - 711.81))).abs() < 1e-9);
    }

    #[test]
    fn terminator_mismatch_rejected() {
        let t = LmpTable::new(
            "X",
            vec![0.0, 600.0, 1000.0],
            vec![10.0, 14.0, 15.0], // last differs from preceding
        )
        .unwrap();
        let err = LmpCurve::from_table(&t).unwrap_err();
        assert!(matches!(err, Error::InvalidInput { field: "prices", .. }));
    }

    #[test]
    fn price_of_load_examples() {
        let curve = pjm_curve("A");
        assert_eq!(curve.price(curve.price_of_load(650.0).unwrap()), 15.0);
        // A boundary opens its interval.
        assert_eq!(curve.price(curve.price_of_load(600.0).unwrap()), 14.0);
        // d_max belongs to the last interval.
        assert_eq!(curve.price(curve.price_of_load(1484.06).unwrap()), 16.98);
        assert!(curve.price_of_load(-1.0).is_err());
        assert!(curve.price_of_load(1484.07).is_err());
    }

    #[test]
    fn region_lengths_sum_to_d_max() {
        for bus in ["A", "B", "C", "D", "E"] {
            let curve = pjm_curve(bus);
            let total: f64 = curve.levels().iter().map(|l| l.length).sum();
            assert!(
                (total - curve.d_max()).abs() < 1e-9,
                "bus {bus}: {total} != {}",
                curve.d_max()
            );
        }
    }

    #[test]
    fn rebuild_from_interval_dump_is_idempotent() {
        for bus in ["A", "B", "C", "D", "E"] {
            let curve = pjm_curve(bus);
            let rebuilt = LmpCurve::from_intervals(curve.bus_id(), curve.intervals()).unwrap();
            assert_eq!(curve, rebuilt);
        }
    }

    proptest::proptest! {
        // Every load lands in exactly one level, and that level's region
        // contains it.
        #[test]
        fn partition_property(frac in 0.0f64..=1.0, bus in 0usize..5) {
            let bus = ["A", "B", "C", "D", "E"][bus];
            let curve = pjm_curve(bus);
            let load = frac * curve.d_max();
            let i = curve.price_of_load(load).unwrap();
            let containing: Vec<usize> = (0..curve.num_levels())
                .filter(|&j| {
                    curve.level(j).pieces.iter().any(|&(lo, hi)| {
                        let closed_hi = hi == curve.d_max();
                        load >= lo && (load < hi || (closed_hi && load <= hi))
                    })
                })
                .collect();
            proptest::prop_assert_eq!(containing, vec![i]);
        }
    }
}
