use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Originals rejected on the test split.
    PMiss,
    /// Fakes of one class accepted on the test split.
    PFa,
    /// Misclassified fraction of one class (multi-class setups).
    ClassError,
    /// Originals rejected on the validation split after calibration.
    ValPMiss,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PMiss => "p_miss",
            Metric::PFa => "p_fa",
            Metric::ClassError => "class_error",
            Metric::ValPMiss => "val_p_miss",
        }
    }

    fn parse(s: &str) -> Option<Metric> {
        [Metric::PMiss, Metric::PFa, Metric::ClassError, Metric::ValPMiss].into_iter().find(|m| m.as_str() == s)
    }
}

/// One measured rate of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub setup: String,
    pub class: String,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub entries: Vec<RunEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub setup: String,
    pub class: String,
    pub metric: Metric,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub preset: String,
    pub runs: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub rows: Vec<ReportRow>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ErrorReport {
    /// Aggregates runs; rows keep the order in which the first run reported them.
    pub fn aggregate(preset: &str, seed: u64, dataset_hash: &str, runs: &[RunResult]) -> Result<ErrorReport> {
        let first = runs.first().ok_or_else(|| Error::Param("no runs to aggregate".into()))?;
        let mut rows = Vec::new();
        for e in &first.entries {
            let values = runs
                .iter()
                .map(|r| {
                    r.entries
                        .iter()
                        .find(|x| x.setup == e.setup && x.class == e.class && x.metric == e.metric)
                        .map(|x| x.value)
                        .ok_or_else(|| Error::Data(format!("run {} lacks {}/{}/{}", r.run, e.setup, e.class, e.metric.as_str())))
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = mean_std(&values);
            rows.push(ReportRow { setup: e.setup.clone(), class: e.class.clone(), metric: e.metric, mean, std, values });
        }
        Ok(ErrorReport { preset: preset.to_string(), runs: runs.len(), seed, dataset_hash: dataset_hash.to_string(), rows })
    }

    pub fn row(&self, setup: &str, class: &str, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.setup == setup && r.class == class && r.metric == metric)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("# {} ({} runs, seed {})\n\n", self.preset, self.runs, self.seed);
        s.push_str("| setup | class | metric | mean (%) | std (%) |\n|---|---|---|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {:.2} |",
                r.setup,
                r.class,
                r.metric.as_str(),
                100.0 * r.mean,
                100.0 * r.std
            );
        }
        s
    }
}

pub fn runs_to_csv(runs: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "seed", "setup", "class", "metric", "value"])?;
    for r in runs {
        for e in &r.entries {
            w.write_record([
                r.run.to_string(),
                r.seed.to_string(),
                e.setup.clone(),
                e.class.clone(),
                e.metric.as_str().to_string(),
                format!("{:?}", e.value),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn runs_from_csv(text: &str) -> Result<Vec<RunResult>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<RunResult> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| Error::Data(format!("bad {what} in per-run CSV line {:?}", rec.position().map(|p| p.line())));
        let run: usize = field(0).parse().map_err(|_| bad("run"))?;
        let seed: u64 = field(1).parse().map_err(|_| bad("seed"))?;
        let metric = Metric::parse(field(4)).ok_or_else(|| bad("metric"))?;
        let value: f64 = field(5).parse().map_err(|_| bad("value"))?;
        let entry = RunEntry { setup: field(2).to_string(), class: field(3).to_string(), metric, value };
        match out.iter_mut().find(|x| x.run == run) {
            Some(x) => x.entries.push(entry),
            None => out.push(RunResult { run, seed, entries: vec![entry] }),
        }
    }
    Ok(out)
}
