//! Hourly buy prices, derived sell prices and forecast windows.
//!
//! Sell prices are always `sell_ratio · buy`. Forecast windows that run past the
//! end of a series wrap around to its start, so a single daily profile can be
//! replayed for as many days as needed.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SELL_RATIO: f64 = 0.5;
pub const MIN_HOURS: usize = 24;

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("row {row}: gap at hour {hour}")]
    Gap { row: usize, hour: usize },
    #[error("row {row}: duplicate hour {hour}")]
    Duplicate { row: usize, hour: usize },
    #[error("row {row}: hour {hour} out of order")]
    OutOfOrder { row: usize, hour: usize },
    #[error("row {row}: negative price {price} at hour {hour}")]
    Negative { row: usize, hour: usize, price: f64 },
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("expected header `hour_index,buy_price`, found `{0}`")]
    Header(String),
    #[error("series has {0} hours, at least {MIN_HOURS} required")]
    TooShort(usize),
    #[error("invalid sell ratio {0}")]
    SellRatio(f64),
    #[error("invalid synthetic profile: {0}")]
    Synthetic(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    buy: Vec<f64>,
    sell_ratio: f64,
}

/// Buy and sell prices for the next `N` hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceWindow {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

impl PriceWindow {
    pub fn len(&self) -> usize {
        self.buy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buy.is_empty()
    }

    pub fn constant(buy: f64, sell: f64, horizon: usize) -> Self {
        Self { buy: vec![buy; horizon], sell: vec![sell; horizon] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceSummary {
    pub hours: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub argmin: usize,
    pub argmax: usize,
}

impl PriceSeries {
    pub fn new(buy: Vec<f64>, sell_ratio: f64) -> Result<Self, PriceError> {
        if buy.len() < MIN_HOURS {
            return Err(PriceError::TooShort(buy.len()));
        }
        if let Some((hour, &price)) = buy.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(PriceError::Negative { row: hour + 1, hour, price });
        }
        if !(sell_ratio >= 0.0) || !sell_ratio.is_finite() {
            return Err(PriceError::SellRatio(sell_ratio));
        }
        Ok(Self { buy, sell_ratio })
    }

    pub fn hours(&self) -> usize {
        self.buy.len()
    }

    pub fn sell_ratio(&self) -> f64 {
        self.sell_ratio
    }

    pub fn buy_prices(&self) -> &[f64] {
        &self.buy
    }

    /// Buy price at hour `k`, wrapping modulo the series length.
    pub fn buy(&self, k: usize) -> f64 {
        self.buy[k % self.buy.len()]
    }

    pub fn sell(&self, k: usize) -> f64 {
        self.sell_ratio * self.buy(k)
    }

    pub fn with_sell_ratio(mut self, sell_ratio: f64) -> Result<Self, PriceError> {
        if !(sell_ratio >= 0.0) || !sell_ratio.is_finite() {
            return Err(PriceError::SellRatio(sell_ratio));
        }
        self.sell_ratio = sell_ratio;
        Ok(self)
    }

    pub fn summary(&self) -> PriceSummary {
        let (mut argmin, mut argmax) = (0, 0);
        for (t, &p) in self.buy.iter().enumerate() {
            if p < self.buy[argmin] {
                argmin = t;
            }
            if p > self.buy[argmax] {
                argmax = t;
            }
        }
        PriceSummary {
            hours: self.buy.len(),
            min: self.buy[argmin],
            max: self.buy[argmax],
            mean: self.buy.iter().sum::<f64>() / self.buy.len() as f64,
            argmin,
            argmax,
        }
    }
}

/// Reads a `hour_index,buy_price` CSV (one-line header, hours contiguous from 0).
pub fn load_csv(path: impl AsRef<Path>, sell_ratio: f64) -> Result<PriceSeries, PriceError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, sell_ratio)
}

pub fn read_csv<R: Read>(reader: R, sell_ratio: f64) -> Result<PriceSeries, PriceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "hour_index" || &headers[1] != "buy_price" {
        return Err(PriceError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut buy = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let record = record.map_err(|e| PriceError::Parse { row, msg: e.to_string() })?;
        if record.len() != 2 {
            return Err(PriceError::Parse { row, msg: format!("expected 2 fields, found {}", record.len()) });
        }
        let hour: usize = record[0]
            .parse()
            .map_err(|_| PriceError::Parse { row, msg: format!("bad hour index `{}`", &record[0]) })?;
        let price: f64 =
            record[1].parse().map_err(|_| PriceError::Parse { row, msg: format!("bad price `{}`", &record[1]) })?;
        let expected = buy.len();
        if hour > expected {
            return Err(PriceError::Gap { row, hour: expected });
        }
        if hour < expected {
            return Err(if hour + 1 == expected {
                PriceError::Duplicate { row, hour }
            } else {
                PriceError::OutOfOrder { row, hour }
            });
        }
        if !(price >= 0.0) || !price.is_finite() {
            return Err(PriceError::Negative { row, hour, price });
        }
        buy.push(price);
    }
    PriceSeries::new(buy, sell_ratio)
}

pub fn write_csv<W: std::io::Write>(series: &PriceSeries, w: W) -> Result<(), PriceError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["hour_index", "buy_price"])?;
    for (t, p) in series.buy.iter().enumerate() {
        wtr.write_record([t.to_string(), p.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// The `N` price pairs starting at hour `k`, wrapping past the end.
pub fn forecast_window(series: &PriceSeries, k: usize, horizon: usize) -> PriceWindow {
    assert!(horizon >= 1, "forecast horizon must be at least 1");
    PriceWindow {
        buy: (k..k + horizon).map(|t| series.buy(t)).collect(),
        sell: (k..k + horizon).map(|t| series.sell(t)).collect(),
    }
}

/// Parameters of the double-peaked synthetic daily profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub base: f64,
    pub amplitude: f64,
    pub peak_hour: usize,
    pub second_peak_hour: usize,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self { base: 30.0, amplitude: 10.0, peak_hour: 8, second_peak_hour: 18 }
    }
}

const BUMP_HALF_WIDTH: f64 = 6.0;
const SECOND_PEAK_WEIGHT: f64 = 0.8;

fn bump(hour: usize, center: usize) -> f64 {
    let raw = (hour as f64 - center as f64).abs() % 24.0;
    let dist = raw.min(24.0 - raw);
    if dist >= BUMP_HALF_WIDTH {
        0.0
    } else {
        0.5 * (1.0 + (PI * dist / BUMP_HALF_WIDTH).cos())
    }
}

/// 24-hour profile made of two raised-cosine bumps (the second at 80% height),
/// rescaled so prices span `[base − amplitude, base + amplitude]`.
pub fn synth_daily(profile: &SyntheticProfile, sell_ratio: f64) -> Result<PriceSeries, PriceError> {
    let SyntheticProfile { base, amplitude, peak_hour, second_peak_hour } = *profile;
    if !(amplitude >= 0.0 && base > amplitude) {
        return Err(PriceError::Synthetic(format!(
            "need base > amplitude >= 0, got base={base}, amplitude={amplitude}"
        )));
    }
    if peak_hour >= 24 || second_peak_hour >= 24 {
        return Err(PriceError::Synthetic("peak hours must lie in 0..24".into()));
    }
    let shape: Vec<f64> =
        (0..24).map(|h| bump(h, peak_hour) + SECOND_PEAK_WEIGHT * bump(h, second_peak_hour)).collect();
    let top = shape.iter().copied().fold(0.0_f64, f64::max);
    let buy = shape.iter().map(|s| base + amplitude * (2.0 * s / top - 1.0)).collect();
    PriceSeries::new(buy, sell_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_text(rows: &[(usize, f64)]) -> String {
        let mut s = String::from("hour_index,buy_price\n");
        for (h, p) in rows {
            s.push_str(&format!("{h},{p}\n"));
        }
        s
    }

    #[test]
    fn loads_full_day() {
        let rows: Vec<(usize, f64)> = (0..24).map(|h| (h, 30.0 + h as f64)).collect();
        let series = read_csv(csv_text(&rows).as_bytes(), 0.5).unwrap();
        assert_eq!(series.hours(), 24);
        assert_eq!(series.buy(3), 33.0);
    }

    #[test]
    fn missing_hour_is_a_gap() {
        let rows: Vec<(usize, f64)> = (0..25).filter(|&h| h != 5).map(|h| (h, 10.0)).collect();
        let err = read_csv(csv_text(&rows).as_bytes(), 0.5).unwrap_err();
        assert!(matches!(err, PriceError::Gap { hour: 5, .. }));
        assert!(err.to_string().contains("gap at hour 5"), "{err}");
    }

    #[test]
    fn duplicate_and_negative_rows_name_the_row() {
        let mut rows: Vec<(usize, f64)> = (0..24).map(|h| (h, 10.0)).collect();
        rows.insert(3, (2, 10.0));
        match read_csv(csv_text(&rows).as_bytes(), 0.5).unwrap_err() {
            PriceError::Duplicate { row, hour } => assert_eq!((row, hour), (5, 2)),
            e => panic!("{e}"),
        }
        let mut rows: Vec<(usize, f64)> = (0..24).map(|h| (h, 10.0)).collect();
        rows[7].1 = -1.0;
        assert!(matches!(read_csv(csv_text(&rows).as_bytes(), 0.5), Err(PriceError::Negative { hour: 7, .. })));
    }

    #[test]
    fn header_and_length_are_checked() {
        assert!(matches!(read_csv("hour,price\n0,1\n".as_bytes(), 0.5), Err(PriceError::Header(_))));
        let rows: Vec<(usize, f64)> = (0..10).map(|h| (h, 10.0)).collect();
        assert!(matches!(read_csv(csv_text(&rows).as_bytes(), 0.5), Err(PriceError::TooShort(10))));
    }

    #[test]
    fn sell_follows_ratio() {
        let s = PriceSeries::new(vec![40.0; 24], 0.5).unwrap();
        assert_eq!(s.sell(0), 20.0);
    }

    #[test]
    fn windows_slice_and_wrap() {
        let s = PriceSeries::new((0..24).map(|h| h as f64).collect(), 0.5).unwrap();
        assert_eq!(forecast_window(&s, 0, 12).buy, (0..12).map(|h| h as f64).collect::<Vec<_>>());
        let w = forecast_window(&s, 20, 12);
        let expect: Vec<f64> = [20, 21, 22, 23, 0, 1, 2, 3, 4, 5, 6, 7].iter().map(|&h| h as f64).collect();
        assert_eq!(w.buy, expect);
        let one = forecast_window(&s, 5, 1);
        assert_eq!((one.buy.clone(), one.sell.clone()), (vec![5.0], vec![2.5]));
    }

    #[test]
    fn synthetic_profiles() {
        let flat = synth_daily(&SyntheticProfile { amplitude: 0.0, ..Default::default() }, 0.5).unwrap();
        assert!(flat.buy_prices().iter().all(|&p| p == 30.0));

        let s = synth_daily(&SyntheticProfile { base: 30.0, amplitude: 10.0, peak_hour: 8, second_peak_hour: 18 }, 0.5)
            .unwrap();
        let sum = s.summary();
        assert!(sum.min >= 20.0 && sum.max <= 50.0);
        assert!((7..=9).contains(&sum.argmax), "{sum:?}");
        assert_eq!(s.hours(), 24);

        assert!(synth_daily(&SyntheticProfile { base: 5.0, amplitude: 10.0, ..Default::default() }, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn windows_tile_the_series(start_shift in 0usize..24, horizon in 1usize..30) {
            let s = PriceSeries::new((0..24).map(|h| 1.0 + h as f64).collect(), 0.5).unwrap();
            let mut tiled = Vec::new();
            let mut k = start_shift;
            while tiled.len() < 72 {
                tiled.extend(forecast_window(&s, k, horizon).buy);
                k += horizon;
            }
            for (i, p) in tiled.iter().enumerate() {
                prop_assert_eq!(*p, s.buy(start_shift + i));
            }
        }

        #[test]
        fn sell_ratio_holds_everywhere(ratio in 0.0f64..2.0, prices in proptest::collection::vec(0.01f64..100.0, 24..48)) {
            let s = PriceSeries::new(prices, ratio).unwrap();
            for t in 0..s.hours() {
                prop_assert!((s.sell(t) / s.buy(t) - ratio).abs() < 1e-12);
            }
        }
    }
}
