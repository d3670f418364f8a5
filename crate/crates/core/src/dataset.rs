//! Run-to-failure datasets: loading, RUL labelling, instance-level splits and
//! a synthetic degradation generator used by tests and demos.
//!
//! Series are stored as `d × T` matrices (channel rows, time columns). Missing
//! readings are `NaN`. Categorical channels hold integer codes indexing the
//! dataset's [`SymbolTable`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{self, rng_for};

/// Column index → lexicographically sorted symbols. Codes index into the list.
pub type SymbolTable = BTreeMap<usize, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    /// `d × T`, `NaN` marks a missing reading.
    pub values: Array2<f64>,
    pub rul: Option<Vec<f64>>,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInstance {
    pub id: String,
    /// Series observed up to the truncation time, `d × T'`.
    pub values: Array2<f64>,
    pub true_rul: f64,
    #[serde(default)]
    pub symbols: SymbolTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunToFailureDataset {
    pub instances: Vec<Instance>,
    pub sensor_names: Vec<String>,
    pub categorical_columns: BTreeSet<usize>,
    #[serde(default)]
    pub symbols: SymbolTable,
}

impl RunToFailureDataset {
    /// Builds a dataset and checks the structural invariants.
    pub fn new(
        instances: Vec<Instance>,
        sensor_names: Vec<String>,
        categorical_columns: BTreeSet<usize>,
        symbols: SymbolTable,
    ) -> Result<Self> {
        let ds = Self {
            instances,
            sensor_names,
            categorical_columns,
            symbols,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sensor_names.len();
        if d == 0 {
            return Err(Error::Shape("dataset has no channels".into()));
        }
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if inst.dim() != d {
                return Err(Error::Shape(format!(
                    "instance {} has {} channels, expected {d}",
                    inst.id,
                    inst.dim()
                )));
            }
            if inst.is_empty() {
                return Err(Error::Shape(format!("instance {} is empty", inst.id)));
            }
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Shape(format!("duplicate instance id {}", inst.id)));
            }
            if let Some(rul) = &inst.rul {
                check_rul(&inst.id, rul, inst.len())?;
            }
        }
        if let Some(&c) = self.categorical_columns.iter().find(|&&c| c >= d) {
            return Err(Error::Shape(format!("categorical column {c} out of range")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sensor_names.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.instances.iter().map(|i| i.id.as_str()).collect()
    }

    /// Same metadata, different instance subset.
    pub fn with_instances(&self, instances: Vec<Instance>) -> Self {
        Self {
            instances,
            sensor_names: self.sensor_names.clone(),
            categorical_columns: self.categorical_columns.clone(),
            symbols: self.symbols.clone(),
        }
    }

    /// Concatenates the instances of two datasets with identical schema.
    pub fn merged(&self, other: &RunToFailureDataset) -> Result<Self> {
        if self.sensor_names != other.sensor_names
            || self.categorical_columns != other.categorical_columns
            || self.symbols != other.symbols
        {
            return Err(Error::Contract("cannot merge datasets with different schema".into()));
        }
        let mut instances = self.instances.clone();
        instances.extend(other.instances.iter().cloned());
        let ds = self.with_instances(instances);
        ds.validate()?;
        Ok(ds)
    }
}

fn check_rul(id: &str, rul: &[f64], len: usize) -> Result<()> {
    if rul.len() != len {
        return Err(Error::Shape(format!(
            "instance {id}: rul length {} != series length {len}",
            rul.len()
        )));
    }
    if rul.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Data(format!("instance {id}: rul must be finite and non-negative")));
    }
    for w in rul.windows(2) {
        let step = w[0] - w[1];
        if !(-1e-9..=1.0 + 1e-9).contains(&step) {
            return Err(Error::Data(format!(
                "instance {id}: rul must be non-increasing with step at most 1"
            )));
        }
    }
    Ok(())
}

fn check_equidistant(id: &str, steps: &[i64]) -> Result<()> {
    if steps.len() < 2 {
        return Ok(());
    }
    let delta = steps[1] - steps[0];
    if delta <= 0 || steps.windows(2).any(|w| w[1] - w[0] != delta) {
        return Err(Error::Data(format!(
            "instance {id}: timesteps are not equidistant"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// C-MAPSS text format
// ---------------------------------------------------------------------------

struct UnitRows {
    /// (cycle, values)
    rows: Vec<(i64, Vec<f64>)>,
}

fn parse_cmapss_rows(text: &str, expected_cols: Option<usize>) -> Result<(BTreeMap<i64, UnitRows>, usize)> {
    let mut units: BTreeMap<i64, UnitRows> = BTreeMap::new();
    let mut ncols = expected_cols;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut nums = Vec::with_capacity(tokens.len());
        for tok in &tokens {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric token {tok:?}"),
            })?;
            nums.push(v);
        }
        if nums.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected unit, cycle and at least one value, got {} columns", nums.len()),
            });
        }
        match ncols {
            Some(n) if n != nums.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {n} columns, got {}", nums.len()),
                })
            }
            None => ncols = Some(nums.len()),
            _ => {}
        }
        let unit = integral(nums[0], line_no, "unit id")?;
        let cycle = integral(nums[1], line_no, "cycle")?;
        units
            .entry(unit)
            .or_insert_with(|| UnitRows { rows: Vec::new() })
            .rows
            .push((cycle, nums[2..].to_vec()));
    }
    Ok((units, ncols.unwrap_or(0)))
}

fn integral(v: f64, line: usize, what: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} must be an integer, got {v}"),
        });
    }
    Ok(v as i64)
}

fn units_to_series(units: BTreeMap<i64, UnitRows>, d: usize) -> Result<Vec<(String, Array2<f64>)>> {
    let mut out = Vec::with_capacity(units.len());
    for (unit, mut rows) in units {
        rows.rows.sort_by_key(|(c, _)| *c);
        let id = unit.to_string();
        let cycles: Vec<i64> = rows.rows.iter().map(|(c, _)| *c).collect();
        if cycles.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DuplicateKey {
                instance: id,
                timestep: cycles.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]).unwrap_or(0),
            });
        }
        check_equidistant(&id, &cycles)?;
        let t = rows.rows.len();
        let mut values = Array2::zeros((d, t));
        for (j, (_, row)) in rows.rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                values[[c, j]] = *v;
            }
        }
        out.push((id, values));
    }
    Ok(out)
}

fn cmapss_names(d: usize) -> Vec<String> {
    if d == 24 {
        (1..=3)
            .map(|i| format!("setting_{i}"))
            .chain((1..=21).map(|i| format!("sensor_{i}")))
            .collect()
    } else {
        (1..=d).map(|i| format!("col_{i}")).collect()
    }
}

/// Reads the C-MAPSS training, test and RUL files.
///
/// The training dataset is returned unlabelled; see [`label_rul`].
pub fn load_cmapss(
    train_path: &Path,
    test_path: &Path,
    rul_path: &Path,
) -> Result<(RunToFailureDataset, Vec<TestInstance>)> {
    let train = load_cmapss_series(train_path)?;
    let (units, _) = parse_cmapss_rows(&fs::read_to_string(test_path)?, Some(train.dim() + 2))?;
    let test_series = units_to_series(units, train.dim())?;
    let ruls = parse_rul_file(&fs::read_to_string(rul_path)?)?;
    if ruls.len() != test_series.len() {
        return Err(Error::Shape(format!(
            "{} test units but {} RUL values",
            test_series.len(),
            ruls.len()
        )));
    }
    let test = test_series
        .into_iter()
        .zip(ruls)
        .map(|((id, values), true_rul)| TestInstance {
            id,
            values,
            true_rul,
            symbols: SymbolTable::new(),
        })
        .collect();
    Ok((train, test))
}

/// Reads a single C-MAPSS-format series file (no labels).
pub fn load_cmapss_series(path: &Path) -> Result<RunToFailureDataset> {
    let (units, ncols) = parse_cmapss_rows(&fs::read_to_string(path)?, None)?;
    if units.is_empty() {
        return Err(Error::InsufficientData(format!("{} contains no rows", path.display())));
    }
    let d = ncols - 2;
    let instances = units_to_series(units, d)?
        .into_iter()
        .map(|(id, values)| Instance { id, values, rul: None })
        .collect();
    RunToFailureDataset::new(instances, cmapss_names(d), BTreeSet::new(), SymbolTable::new())
}

fn parse_rul_file(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("non-numeric RUL {tok:?}"),
        })?;
        if !(v >= 0.0) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("RUL must be non-negative, got {v}"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Long CSV format
// ---------------------------------------------------------------------------

/// Column roles for the long CSV format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub instance_id: String,
    pub timestep: String,
    pub sensors: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub target: Option<String>,
}

impl CsvSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn channel_names(&self) -> Vec<String> {
        self.sensors.iter().chain(self.categorical.iter()).cloned().collect()
    }
}

/// Loads a long-format CSV (one row per instance and timestep).
///
/// Channels are the schema's sensors followed by its categorical columns.
pub fn load_long_csv(path: &Path, schema: &CsvSchema) -> Result<RunToFailureDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("unknown column {name:?}")))
    };
    let id_col = col(&schema.instance_id)?;
    let ts_col = col(&schema.timestep)?;
    let sensor_cols = schema.sensors.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
    let cat_cols = schema.categorical.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
    let target_col = schema.target.as_deref().map(col).transpose()?;
    if sensor_cols.is_empty() && cat_cols.is_empty() {
        return Err(Error::Schema("schema maps no sensor or categorical columns".into()));
    }

    struct Row {
        step: i64,
        values: Vec<f64>,
        cats: Vec<Option<String>>,
        target: Option<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let mut symbol_sets: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cat_cols.len()];

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = i + 2;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let id = field(id_col).to_string();
        let step: i64 = field(ts_col).parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestep {:?} is not an integer", field(ts_col)),
        })?;
        let mut values = Vec::with_capacity(sensor_cols.len());
        for &c in &sensor_cols {
            let cell = field(c);
            if cell.is_empty() {
                values.push(f64::NAN);
            } else {
                values.push(cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric value {cell:?} in column {:?}", &headers[c]),
                })?);
            }
        }
        let mut cats = Vec::with_capacity(cat_cols.len());
        for (k, &c) in cat_cols.iter().enumerate() {
            let cell = field(c);
            if cell.is_empty() {
                cats.push(None);
            } else {
                symbol_sets[k].insert(cell.to_string());
                cats.push(Some(cell.to_string()));
            }
        }
        let target = match target_col {
            Some(c) => Some(field(c).parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric target {:?}", field(c)),
            })?),
            None => None,
        };
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(Row {
            step,
            values,
            cats,
            target,
        });
    }

    let n_sensor = sensor_cols.len();
    let d = n_sensor + cat_cols.len();
    let symbol_lists: Vec<Vec<String>> = symbol_sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let mut instances = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).unwrap_or_default();
        rows.sort_by_key(|r| r.step);
        if let Some(w) = rows.windows(2).find(|w| w[0].step == w[1].step) {
            return Err(Error::DuplicateKey {
                instance: id,
                timestep: w[0].step,
            });
        }
        let steps: Vec<i64> = rows.iter().map(|r| r.step).collect();
        check_equidistant(&id, &steps)?;
        let mut values = Array2::from_elem((d, rows.len()), f64::NAN);
        for (j, row) in rows.iter().enumerate() {
            for (c, v) in row.values.iter().enumerate() {
                values[[c, j]] = *v;
            }
            for (k, cat) in row.cats.iter().enumerate() {
                if let Some(sym) = cat {
                    let code = symbol_lists[k].binary_search(sym).expect("symbol collected above");
                    values[[n_sensor + k, j]] = code as f64;
                }
            }
        }
        let rul = if target_col.is_some() {
            Some(rows.iter().map(|r| r.target.unwrap_or(f64::NAN)).collect())
        } else {
            None
        };
        instances.push(Instance { id, values, rul });
    }
    let categorical_columns = (n_sensor..d).collect();
    let symbols = symbol_lists
        .into_iter()
        .enumerate()
        .map(|(k, list)| (n_sensor + k, list))
        .collect();
    RunToFailureDataset::new(instances, schema.channel_names(), categorical_columns, symbols)
}

/// Writes a dataset in the long CSV format and returns the matching schema.
pub fn write_long_csv(dataset: &RunToFailureDataset, path: &Path) -> Result<CsvSchema> {
    let mut sensors = Vec::new();
    let mut categorical = Vec::new();
    for (c, name) in dataset.sensor_names.iter().enumerate() {
        if dataset.categorical_columns.contains(&c) {
            categorical.push(name.clone());
        } else {
            sensors.push(name.clone());
        }
    }
    // The loader places categorical channels after sensors.
    let numeric_first: Vec<usize> = (0..dataset.dim())
        .filter(|c| !dataset.categorical_columns.contains(c))
        .chain(dataset.categorical_columns.iter().copied())
        .collect();
    let has_target = dataset.instances.iter().any(|i| i.rul.is_some());
    let schema = CsvSchema {
        instance_id: "instance_id".into(),
        timestep: "timestep".into(),
        sensors,
        categorical,
        target: has_target.then(|| "rul".to_string()),
    };
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![schema.instance_id.clone(), schema.timestep.clone()];
    header.extend(schema.channel_names());
    if let Some(t) = &schema.target {
        header.push(t.clone());
    }
    writer.write_record(&header)?;
    for inst in &dataset.instances {
        for t in 0..inst.len() {
            let mut row = vec![inst.id.clone(), t.to_string()];
            for &c in &numeric_first {
                let v = inst.values[[c, t]];
                if v.is_nan() {
                    row.push(String::new());
                } else if dataset.categorical_columns.contains(&c) {
                    let table = dataset.symbols.get(&c).ok_or_else(|| {
                        Error::Schema(format!("no symbol table for categorical column {c}"))
                    })?;
                    row.push(table[v as usize].clone());
                } else {
                    row.push(format!("{v}"));
                }
            }
            if has_target {
                let r = inst.rul.as_ref().map(|r| r[t]).unwrap_or(f64::NAN);
                row.push(format!("{r}"));
            }
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(schema)
}

// ---------------------------------------------------------------------------
// Labelling, splitting, truncation
// ---------------------------------------------------------------------------

/// Attaches linear RUL labels, optionally capped (piecewise-linear).
pub fn label_rul(dataset: &RunToFailureDataset, cap: Option<f64>) -> RunToFailureDataset {
    let mut out = dataset.clone();
    for inst in &mut out.instances {
        inst.rul = Some(linear_rul(inst.len(), cap));
    }
    out
}

pub fn linear_rul(len: usize, cap: Option<f64>) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let r = (len - 1 - t) as f64;
            match cap {
                Some(c) => r.min(c),
                None => r,
            }
        })
        .collect()
}

/// Splits by whole instances; `round(fraction · N)` go to the first part,
/// clamped so that both parts keep at least one instance.
pub fn split_train_val(
    dataset: &RunToFailureDataset,
    fraction: f64,
    seed: u64,
) -> Result<(RunToFailureDataset, RunToFailureDataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 instances to split, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Contract(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0x5b17]));
    let mut train_idx: Vec<usize> = order[..n_train].to_vec();
    let mut val_idx: Vec<usize> = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.instances[i].clone()).collect();
    Ok((
        dataset.with_instances(pick(&train_idx)),
        dataset.with_instances(pick(&val_idx)),
    ))
}

/// Cuts every labelled instance at a random fraction of its length drawn
/// uniformly from `[lo, hi]`; the target is the RUL at the last kept step.
pub fn truncate_instances(
    dataset: &RunToFailureDataset,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<Vec<TestInstance>> {
    let mut rng = rng_for(seed, &[0x7e57]);
    dataset
        .instances
        .iter()
        .map(|inst| {
            let rul = inst
                .rul
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("instance {} has no RUL labels", inst.id)))?;
            let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let keep = ((frac * inst.len() as f64).round() as usize).clamp(1, inst.len());
            Ok(TestInstance {
                id: inst.id.clone(),
                values: inst.values.slice(s![.., ..keep]).to_owned(),
                true_rul: rul[keep - 1],
                symbols: dataset.symbols.clone(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic degradation data
// ---------------------------------------------------------------------------

/// Synthetic run-to-failure fleet.
///
/// Channel 0 follows `t/(T-1) + exp(-(T-1-t)/20)` plus Gaussian noise, i.e. a
/// linear wear trend with an exponential tail near failure. Every further
/// channel mixes that trend with independent noise using a random weight.
pub fn generate_synthetic(
    n_instances: usize,
    d: usize,
    base_length: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<RunToFailureDataset> {
    if n_instances == 0 || d == 0 || base_length == 0 {
        return Err(Error::Contract("counts must be at least 1".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Contract("noise_sd must be non-negative".into()));
    }
    let mut rng = util::rng_for(seed, &[0x5e7]);
    let lo = ((0.5 * base_length as f64).ceil() as usize).max(1);
    let hi = ((1.5 * base_length as f64).floor() as usize).max(lo);
    let mix: Vec<f64> = (1..d).map(|_| rng.random_range(0.2..0.8)).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut instances = Vec::with_capacity(n_instances);
    for i in 0..n_instances {
        let len = rng.random_range(lo..=hi);
        let mut values = Array2::zeros((d, len));
        for t in 0..len {
            let trend = degradation(t, len);
            values[[0, t]] = trend + noise_sd * noise.sample(&mut rng);
            for c in 1..d {
                let w = mix[c - 1];
                values[[c, t]] = w * trend + (1.0 - w) * noise.sample(&mut rng) * 0.5
                    + noise_sd * noise.sample(&mut rng);
            }
        }
        instances.push(Instance {
            id: format!("unit_{:03}", i + 1),
            values,
            rul: Some(linear_rul(len, None)),
        });
    }
    let names = (0..d).map(|c| format!("s{c}")).collect();
    RunToFailureDataset::new(instances, names, BTreeSet::new(), SymbolTable::new())
}

fn degradation(t: usize, len: usize) -> f64 {
    let remaining = (len - 1 - t) as f64;
    let frac = if len > 1 { t as f64 / (len - 1) as f64 } else { 1.0 };
    frac + (-remaining / 20.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn cmapss_groups_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "train.txt", "1 1 0.5\n1 2 0.6\n2 1 0.4");
        let ds = load_cmapss_series(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 1);
        assert_eq!(ds.instances[0].len(), 2);
        assert_eq!(ds.instances[1].len(), 1);
        assert_eq!(ds.instances[0].values[[0, 1]], 0.6);
    }

    #[test]
    fn cmapss_orders_by_cycle_and_handles_trailing_spaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "train.txt", "1 2 0.6 1 \n1 1 0.5 2  \n");
        let ds = load_cmapss_series(&p).unwrap();
        assert_eq!(ds.instances[0].values.row(0).to_vec(), vec![0.5, 0.6]);
    }

    #[test]
    fn cmapss_non_numeric_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "train.txt", "1 1 abc\n");
        match load_cmapss_series(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cmapss_inconsistent_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "train.txt", "1 1 0.5\n1 2 0.6 0.7\n");
        assert!(matches!(load_cmapss_series(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn cmapss_rejects_gaps_in_cycles() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "train.txt", "1 1 0.5\n1 2 0.6\n1 4 0.7\n");
        assert!(matches!(load_cmapss_series(&p), Err(Error::Data(_))));
    }

    #[test]
    fn cmapss_rul_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let train = write(&dir, "train.txt", "1 1 0.5\n1 2 0.6\n");
        let test = write(&dir, "test.txt", "1 1 0.5\n2 1 0.6\n");
        let rul = write(&dir, "rul.txt", "10\n");
        assert!(matches!(load_cmapss(&train, &test, &rul), Err(Error::Shape(_))));
        let rul = write(&dir, "rul2.txt", "10\n20\n");
        let (_, tests) = load_cmapss(&train, &test, &rul).unwrap();
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[1].true_rul, 20.0);
    }

    fn schema() -> CsvSchema {
        CsvSchema {
            instance_id: "id".into(),
            timestep: "t".into(),
            sensors: vec!["x".into()],
            categorical: vec!["mode".into()],
            target: None,
        }
    }

    #[test]
    fn long_csv_groups_and_marks_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "id,t,x,mode\na,1,,m2\na,0,1.5,m1\nb,0,2,m2\n");
        let ds = load_long_csv(&p, &schema()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.instances[0].len(), 2);
        assert_eq!(ds.instances[1].len(), 1);
        assert_eq!(ds.instances[0].values[[0, 0]], 1.5);
        assert!(ds.instances[0].values[[0, 1]].is_nan());
        assert_eq!(ds.symbols[&1], vec!["m1".to_string(), "m2".to_string()]);
        assert_eq!(ds.instances[0].values[[1, 0]], 0.0);
        assert!(ds.categorical_columns.contains(&1));
    }

    #[test]
    fn long_csv_duplicate_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "id,t,x,mode\na,0,1,m\na,0,2,m\n");
        assert!(matches!(
            load_long_csv(&p, &schema()),
            Err(Error::DuplicateKey { timestep: 0, .. })
        ));
    }

    #[test]
    fn long_csv_unknown_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "id,t,x\na,0,1\n");
        assert!(matches!(load_long_csv(&p, &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn label_examples() {
        assert_eq!(linear_rul(5, None), vec![4.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(linear_rul(5, Some(2.0)), vec![2.0, 2.0, 2.0, 1.0, 0.0]);
        assert_eq!(linear_rul(1, None), vec![0.0]);
        assert_eq!(linear_rul(7, Some(f64::INFINITY)), linear_rul(7, None));
    }

    #[test]
    fn split_sizes_and_minimum() {
        let ds = generate_synthetic(10, 1, 20, 0.1, 1).unwrap();
        let (tr, va) = split_train_val(&ds, 0.8, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        let ds2 = ds.with_instances(ds.instances[..2].to_vec());
        let (tr, va) = split_train_val(&ds2, 0.8, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (1, 1));
        let ds1 = ds.with_instances(ds.instances[..1].to_vec());
        assert!(matches!(split_train_val(&ds1, 0.8, 3), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = generate_synthetic(10, 1, 20, 0.1, 1).unwrap();
        let a = split_train_val(&ds, 0.8, 9).unwrap();
        let b = split_train_val(&ds, 0.8, 9).unwrap();
        assert_eq!(a.0.ids(), b.0.ids());
        assert_eq!(a.1.ids(), b.1.ids());
    }

    #[test]
    fn synthetic_noiseless_is_monotone() {
        let ds = generate_synthetic(5, 1, 50, 0.0, 2).unwrap();
        for inst in &ds.instances {
            let row = inst.values.row(0);
            assert!(row.iter().zip(row.iter().skip(1)).all(|(a, b)| b > a));
        }
    }

    #[test]
    fn synthetic_lengths_within_bounds() {
        let ds = generate_synthetic(30, 3, 200, 0.05, 4).unwrap();
        assert_eq!(ds.len(), 30);
        assert!(ds.instances.iter().all(|i| (100..=300).contains(&i.len())));
        assert_eq!(ds, generate_synthetic(30, 3, 200, 0.05, 4).unwrap());
    }

    #[test]
    fn truncation_targets_match_labels() {
        let ds = generate_synthetic(6, 2, 40, 0.1, 5).unwrap();
        let tests = truncate_instances(&ds, 0.3, 0.9, 1).unwrap();
        for (t, inst) in tests.iter().zip(&ds.instances) {
            let keep = t.values.ncols();
            assert!(keep >= (0.3 * inst.len() as f64).floor() as usize);
            assert_eq!(t.true_rul, (inst.len() - keep) as f64);
        }
    }
}
