use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::run::{RunRecord, StepRecord};
use crate::error::{Error, Result};

/// Ordered `key=value` pairs describing a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("manifest lacks {key:?}")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("manifest entry {key}={raw:?}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Reads `key=value` lines; blank lines are skipped and a leading `#` is ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines() {
            let line = line.trim().trim_start_matches('#').trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line without '=': {line:?}")))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }
}

/// Per-step elapsed time in milliseconds and the external products of each step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
    pub ext_prod_counts: Vec<u64>,
}

impl TimingStats {
    /// Statistics of `run` after dropping its first `warmup` steps.
    pub fn from_run(run: &RunRecord, warmup: usize) -> Result<Self> {
        let kept = run.steps.get(warmup..).unwrap_or(&[]);
        let times: Vec<f64> = kept.iter().map(|s| s.elapsed_ms).collect();
        let mut stats = Self::from_samples(&times)?;
        stats.ext_prod_counts = kept.iter().map(|s| s.ext_prod_count).collect();
        Ok(stats)
    }

    /// Population statistics of `times`.
    pub fn from_samples(times: &[f64]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument(
                "no timing samples after warmup".into(),
            ));
        }
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        Ok(Self {
            max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
            samples: times.len(),
            ext_prod_counts: Vec::new(),
        })
    }

    pub fn max_ext_prod(&self) -> u64 {
        self.ext_prod_counts.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub case: String,
    pub method: String,
    pub stats: TimingStats,
}

/// Rows of a timing comparison, printed as a fixed-width table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTable {
    pub rows: Vec<TimingRow>,
}

impl RunTable {
    pub fn find(&self, case: &str, method: &str) -> Option<&TimingStats> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.method == method)
            .map(|r| &r.stats)
    }
}

impl fmt::Display for RunTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:<10} {:>10} {:>10} {:>8} {:>9}",
            "case", "method", "max (ms)", "mean (ms)", "std", "ops/step"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6} {:<10} {:>10.3} {:>10.3} {:>8.3} {:>9}",
                r.case,
                r.method,
                r.stats.max,
                r.stats.mean,
                r.stats.std,
                r.stats.max_ext_prod()
            )?;
        }
        Ok(())
    }
}

/// One row per run, labelled by case and mode, skipping `warmup` steps of each.
pub fn timing_report(runs: &[RunRecord], warmup: usize) -> Result<RunTable> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("timing report of zero runs".into()));
    }
    let rows = runs
        .iter()
        .map(|run| {
            Ok(TimingRow {
                case: run.config.case.to_string(),
                method: run.config.mode.to_string(),
                stats: TimingStats::from_run(run, warmup)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunTable { rows })
}

fn header(p: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..p).map(|i| format!("y{i}")));
    h.extend((0..m).map(|i| format!("u{i}")));
    h.extend((0..m).map(|i| format!("u_nom{i}")));
    h.extend(["err", "elapsed_ms", "ext_prod_count", "margin"].map(String::from));
    h
}

/// Manifest lines as `# key=value`, then the header and one row per step.
pub fn export_csv(run: &RunRecord, path: &Path) -> Result<()> {
    let (p, m) = run
        .steps
        .first()
        .map(|s| (s.y.len(), s.u.len()))
        .unwrap_or((0, 0));
    let mut file = fs::File::create(path)?;
    for (k, v) in run.manifest().entries() {
        writeln!(file, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header(p, m))?;
    for s in &run.steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.y.iter().chain(&s.u).chain(&s.u_nom).map(f64::to_string));
        row.extend([
            s.err.to_string(),
            s.elapsed_ms.to_string(),
            s.ext_prod_count.to_string(),
            s.margin.to_string(),
        ]);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`export_csv`].
pub fn load_csv(path: &Path) -> Result<(Manifest, Vec<StepRecord>)> {
    let text = fs::read_to_string(path)?;
    let comments: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let manifest = Manifest::from_text(&comments)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let head = r.headers()?.clone();
    let count = |prefix: &str| {
        head.iter()
            .filter(|h| {
                h.strip_prefix(prefix)
                    .is_some_and(|d| d.parse::<usize>().is_ok())
            })
            .count()
    };
    let (p, m) = (count("y"), count("u"));
    if head.len() != 1 + p + 2 * m + 4 || count("u_nom") != m {
        return Err(Error::Format(format!("unexpected CSV header {head:?}")));
    }
    let num =
        |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("number {s:?}"))) };
    let mut steps = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != head.len() {
            return Err(Error::Format(format!(
                "row of {} fields, header has {}",
                rec.len(),
                head.len()
            )));
        }
        let f: Vec<&str> = rec.iter().collect();
        let floats =
            |a: usize, b: usize| -> Result<Vec<f64>> { f[a..b].iter().map(|s| num(s)).collect() };
        let base = 1 + p + 2 * m;
        steps.push(StepRecord {
            t: f[0]
                .parse()
                .map_err(|_| Error::Parse(format!("step index {:?}", f[0])))?,
            y: floats(1, 1 + p)?,
            u: floats(1 + p, 1 + p + m)?,
            u_nom: floats(1 + p + m, base)?,
            err: num(f[base])?,
            elapsed_ms: num(f[base + 1])?,
            ext_prod_count: f[base + 2]
                .parse()
                .map_err(|_| Error::Parse(format!("count {:?}", f[base + 2])))?,
            margin: num(f[base + 3])?,
        });
    }
    Ok((manifest, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_text_round_trip() {
        let mut m = Manifest::default();
        m.set("case", 1);
        m.set("mode", "proposed");
        m.set("case", 2);
        assert_eq!(m.to_text(), "case=2\nmode=proposed\n");
        let commented: String = m.to_text().lines().map(|l| format!("# {l}\n")).collect();
        assert_eq!(Manifest::from_text(&commented).unwrap(), m);
        assert_eq!(m.parse::<u32>("case").unwrap(), 2);
        assert!(m.require("seed").is_err());
        assert!(Manifest::from_text("novalue").is_err());
    }

    #[test]
    fn stats_of_identical_timings() {
        let s = TimingStats::from_samples(&[2.5; 10]).unwrap();
        assert_eq!((s.max, s.mean, s.std), (2.5, 2.5, 0.0));
        let s = TimingStats::from_samples(&[1.0, 3.0]).unwrap();
        assert_eq!((s.max, s.mean, s.std), (3.0, 2.0, 1.0));
        assert!(TimingStats::from_samples(&[]).is_err());
    }
}
