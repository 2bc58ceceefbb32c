//! Price and industry-map ingestion.

use crate::error::{Error, Result};
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

/// Share of a ticker's trading days that may be forward-filled.
pub const MAX_MISSING_SHARE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Industry {
    pub name: String,
    /// Indices into [`PriceTable::tickers`].
    pub tickers: Vec<usize>,
}

/// Validated adjusted-close prices on a common trading calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    industries: Vec<Industry>,
    // prices[ticker][date]
    prices: Vec<Vec<f64>>,
}

/// Cells filled during loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub filled: Vec<(String, NaiveDate)>,
}

fn ingest(file: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        file: file.to_string(),
        row,
        message: message.into(),
    }
}

impl PriceTable {
    /// Builds a table from complete per-ticker series.
    pub fn new(dates: Vec<NaiveDate>, industries: Vec<(String, Vec<(String, Vec<f64>)>)>) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(crate::error::invalid("dates must be strictly increasing"));
        }
        let mut tickers = Vec::new();
        let mut prices = Vec::new();
        let mut groups = Vec::new();
        for (name, members) in industries {
            if members.is_empty() {
                return Err(crate::error::invalid(format!("industry {name} has no tickers")));
            }
            let mut idx = Vec::new();
            for (ticker, series) in members {
                if series.len() != dates.len() {
                    return Err(crate::error::invalid(format!("{ticker}: series length differs from the calendar")));
                }
                if series.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return Err(crate::error::invalid(format!("{ticker}: prices must be positive")));
                }
                if tickers.contains(&ticker) {
                    return Err(crate::error::invalid(format!("{ticker} listed twice")));
                }
                idx.push(tickers.len());
                tickers.push(ticker);
                prices.push(series);
            }
            groups.push(Industry { name, tickers: idx });
        }
        Ok(Self {
            dates,
            tickers,
            industries: groups,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn industries(&self) -> &[Industry] {
        &self.industries
    }

    pub fn price(&self, ticker: usize, row: usize) -> f64 {
        self.prices[ticker][row]
    }

    /// Simple return from row − 1 to row.
    pub fn daily_return(&self, ticker: usize, row: usize) -> f64 {
        self.prices[ticker][row] / self.prices[ticker][row - 1] - 1.0
    }

    /// Writes the table back out as `date, ticker, adj_close` and
    /// `ticker, industry`.
    pub fn write_csv<W1: Write, W2: Write>(&self, prices: W1, industries: W2) -> Result<()> {
        let mut w = csv::Writer::from_writer(prices);
        w.write_record(["date", "ticker", "adj_close"])?;
        for (d, date) in self.dates.iter().enumerate() {
            for (t, ticker) in self.tickers.iter().enumerate() {
                w.write_record([date.to_string(), ticker.clone(), self.prices[t][d].to_string()])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(industries);
        w.write_record(["ticker", "industry"])?;
        for ind in &self.industries {
            for &t in &ind.tickers {
                w.write_record([&self.tickers[t], &ind.name])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_industries<R: Read>(input: R, file: &str) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["ticker", "industry"] {
        return Err(ingest(file, 1, "expected header ticker,industry"));
    }
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ingest(file, row, e.to_string()))?;
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(ingest(file, row, "expected two non-empty fields"));
        }
        if out.iter().any(|(t, _)| t == &rec[0]) {
            return Err(ingest(file, row, format!("ticker {} mapped twice", &rec[0])));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    if out.is_empty() {
        return Err(ingest(file, 1, "no tickers"));
    }
    Ok(out)
}

/// Parses prices and the industry map from readers. Industries and tickers
/// keep their order of first appearance in the industry map.
pub fn read_prices<R1: Read, R2: Read>(
    prices: R1,
    prices_name: &str,
    industries: R2,
    industries_name: &str,
) -> Result<(PriceTable, ValidationReport)> {
    let map = read_industries(industries, industries_name)?;
    let ticker_pos: HashMap<&str, usize> = map.iter().enumerate().map(|(i, (t, _))| (t.as_str(), i)).collect();

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(prices);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "ticker", "adj_close"] {
        return Err(ingest(prices_name, 1, "expected header date,ticker,adj_close"));
    }
    let mut cells: Vec<BTreeMap<NaiveDate, f64>> = vec![BTreeMap::new(); map.len()];
    let mut calendar = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ingest(prices_name, row, e.to_string()))?;
        if rec.len() != 3 {
            return Err(ingest(prices_name, row, "expected three fields"));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| ingest(prices_name, row, format!("bad date {:?}: {e}", &rec[0])))?;
        let t = *ticker_pos
            .get(&rec[1])
            .ok_or_else(|| ingest(prices_name, row, format!("ticker {} missing from the industry map", &rec[1])))?;
        let price: f64 = rec[2]
            .parse()
            .map_err(|_| ingest(prices_name, row, format!("bad price {:?}", &rec[2])))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(ingest(prices_name, row, format!("price must be positive, got {price}")));
        }
        if cells[t].insert(date, price).is_some() {
            return Err(ingest(prices_name, row, format!("duplicate price for {} on {date}", &rec[1])));
        }
        calendar.insert(date);
    }
    let dates: Vec<NaiveDate> = calendar.into_iter().collect();
    let mut report = ValidationReport::default();
    let mut series = Vec::with_capacity(map.len());
    for (t, (ticker, _)) in map.iter().enumerate() {
        if cells[t].is_empty() {
            return Err(ingest(prices_name, 0, format!("no prices for {ticker}")));
        }
        let mut s = Vec::with_capacity(dates.len());
        let mut missing = 0usize;
        for (d, date) in dates.iter().enumerate() {
            match cells[t].get(date) {
                Some(&p) => s.push(p),
                None => {
                    let next_present = dates.get(d + 1).is_some_and(|n| cells[t].contains_key(n));
                    let prev_present = d > 0 && cells[t].contains_key(&dates[d - 1]);
                    if !(prev_present && next_present) {
                        return Err(ingest(
                            prices_name,
                            0,
                            format!("{ticker} has a gap at {date} that is not an isolated interior day"),
                        ));
                    }
                    s.push(s[d - 1]);
                    missing += 1;
                    report.filled.push((ticker.clone(), *date));
                }
            }
        }
        if missing as f64 > MAX_MISSING_SHARE * dates.len() as f64 {
            return Err(ingest(
                prices_name,
                0,
                format!("{ticker} is missing {missing} of {} trading days", dates.len()),
            ));
        }
        series.push(s);
    }

    let mut grouped: Vec<(String, Vec<(String, Vec<f64>)>)> = Vec::new();
    for ((ticker, industry), s) in map.into_iter().zip(series) {
        match grouped.iter_mut().find(|(name, _)| *name == industry) {
            Some((_, members)) => members.push((ticker, s)),
            None => grouped.push((industry, vec![(ticker, s)])),
        }
    }
    Ok((PriceTable::new(dates, grouped)?, report))
}

/// Loads `prices.csv` and `industries.csv` from disk.
pub fn load_prices(prices: &Path, industries: &Path) -> Result<(PriceTable, ValidationReport)> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| ingest(&p.display().to_string(), 0, format!("cannot open: {e}")))
    };
    read_prices(
        open(prices)?,
        &prices.display().to_string(),
        open(industries)?,
        &industries.display().to_string(),
    )
}

/// Weekday calendar of `days` trading dates starting at `start`.
pub fn weekday_calendar(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(days);
    let mut d = start;
    while out.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Synthetic market: each industry has a common random-walk factor with
/// its own drift and volatility; tickers add idiosyncratic noise.
pub fn synthetic_market<R: Rng + ?Sized>(
    industries: usize,
    tickers_per_industry: usize,
    days: usize,
    rng: &mut R,
) -> Result<PriceTable> {
    if industries == 0 || tickers_per_industry == 0 || days < 2 {
        return Err(crate::error::invalid("synthetic market needs industries, tickers and at least two days"));
    }
    let dates = weekday_calendar(NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"), days);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut groups = Vec::with_capacity(industries);
    for i in 0..industries {
        let drift = rng.random_range(-0.0004..0.0008);
        let vol = rng.random_range(0.006..0.02);
        let common: Vec<f64> = (0..days).map(|_| drift + vol * std.sample(rng)).collect();
        let mut members = Vec::with_capacity(tickers_per_industry);
        for j in 0..tickers_per_industry {
            let beta = rng.random_range(0.6..1.4);
            let idio = rng.random_range(0.002..0.012);
            let mut p = rng.random_range(20.0..200.0);
            let series = (0..days)
                .map(|d| {
                    if d > 0 {
                        let r = (beta * common[d] + idio * std.sample(rng)).max(-0.5);
                        p *= 1.0 + r;
                    }
                    p
                })
                .collect();
            members.push((format!("I{}T{}", i + 1, j + 1), series));
        }
        groups.push((format!("industry{}", i + 1), members));
    }
    PriceTable::new(dates, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn load(prices: &str, industries: &str) -> Result<(PriceTable, ValidationReport)> {
        read_prices(prices.as_bytes(), "prices.csv", industries.as_bytes(), "industries.csv")
    }

    #[test]
    fn simple_return() {
        let (t, r) = load(
            "date,ticker,adj_close\n2020-01-02,A,100\n2020-01-03,A,101\n",
            "ticker,industry\nA,tech\n",
        )
        .unwrap();
        assert!(r.filled.is_empty());
        assert!((t.daily_return(0, 1) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn isolated_gap_is_filled() {
        let prices = "date,ticker,adj_close\n\
            2020-01-02,A,100\n2020-01-02,B,50\n\
            2020-01-03,B,51\n\
            2020-01-06,A,102\n2020-01-06,B,52\n";
        // 1 of 3 days missing exceeds the 2% cap, so widen the calendar.
        let mut long = String::from(prices);
        for d in weekday_calendar(NaiveDate::from_ymd_opt(2020, 1, 7).unwrap(), 60) {
            long.push_str(&format!("{d},A,100\n{d},B,50\n"));
        }
        let (t, r) = load(&long, "ticker,industry\nA,x\nB,x\n").unwrap();
        assert_eq!(r.filled, vec![("A".to_string(), NaiveDate::from_ymd_opt(2020, 1, 3).unwrap())]);
        assert_eq!(t.price(0, 1), 100.0);
        assert!(load(prices, "ticker,industry\nA,x\nB,x\n").is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        let ind = "ticker,industry\nA,x\n";
        let unknown = load("date,ticker,adj_close\n2020-01-02,A,1\n2020-01-02,Z,1\n", ind);
        assert!(matches!(unknown, Err(Error::Ingest { row: 3, .. })));
        let neg = load("date,ticker,adj_close\n2020-01-02,A,-1\n", ind);
        assert!(matches!(neg, Err(Error::Ingest { row: 2, .. })));
        let bad_date = load("date,ticker,adj_close\n02/01/2020,A,1\n", ind);
        assert!(matches!(bad_date, Err(Error::Ingest { row: 2, .. })));
        let dup = load("date,ticker,adj_close\n2020-01-02,A,1\n2020-01-02,A,2\n", ind);
        assert!(matches!(dup, Err(Error::Ingest { row: 3, .. })));
        let header = load("day,ticker,adj_close\n2020-01-02,A,1\n", ind);
        assert!(matches!(header, Err(Error::Ingest { row: 1, .. })));
    }

    #[test]
    fn edge_gap_is_rejected() {
        let prices = "date,ticker,adj_close\n2020-01-02,A,1\n2020-01-02,B,1\n2020-01-03,B,1\n";
        assert!(load(prices, "ticker,industry\nA,x\nB,x\n").is_err());
    }

    #[test]
    fn groups_follow_map_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = synthetic_market(3, 2, 40, &mut rng).unwrap();
        assert_eq!(t.industries().len(), 3);
        let mut p = Vec::new();
        let mut i = Vec::new();
        t.write_csv(&mut p, &mut i).unwrap();
        let (back, report) = read_prices(&p[..], "p", &i[..], "i").unwrap();
        assert!(report.filled.is_empty());
        assert_eq!(back.tickers(), t.tickers());
        assert_eq!(back.industries(), t.industries());
        assert_eq!(back.dates(), t.dates());
    }

    #[test]
    fn calendar_skips_weekends() {
        let d = weekday_calendar(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), 3);
        assert_eq!(
            d,
            vec![
                NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
                NaiveDate::from_ymd_opt(2021, 1, 5).unwrap()
            ]
        );
    }
}
