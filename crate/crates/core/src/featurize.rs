//! Event streams to tensor: schema-driven daily/bin feature extraction,
//! min-max normalization, and mean imputation.
//!
//! Time handling: record timestamps are unix seconds (UTC). The schema
//! carries a fixed UTC offset; local wall time is `ts + offset` and day
//! boundaries are taken on that wall clock. DST transitions are deliberately
//! ignored. Days are indexed from the schema start date; the four bins are
//! half-open six-hour blocks of the local day.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    Activity,
    Audio,
    Conversation,
    Dark,
    GpsLocation,
    WifiLocation,
    Bluetooth,
}

impl Stream {
    pub const ALL: [Stream; 7] = [
        Stream::Activity,
        Stream::Audio,
        Stream::Conversation,
        Stream::Dark,
        Stream::GpsLocation,
        Stream::WifiLocation,
        Stream::Bluetooth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stream::Activity => "activity",
            Stream::Audio => "audio",
            Stream::Conversation => "conversation",
            Stream::Dark => "dark",
            Stream::GpsLocation => "gps_location",
            Stream::WifiLocation => "wifi_location",
            Stream::Bluetooth => "bluetooth",
        }
    }

    pub fn parse(s: &str) -> Result<Stream> {
        Stream::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::data(format!("unknown stream: {s:?}")))
    }

    /// Closed state alphabet, or `None` for open-vocabulary streams
    /// (locations and bluetooth ids).
    pub fn alphabet(&self) -> Option<&'static [&'static str]> {
        match self {
            Stream::Activity => Some(&["stationary", "walk", "run", "unknown"]),
            Stream::Audio => Some(&["silence", "voice", "noise", "unknown"]),
            Stream::Conversation => Some(&["conversation"]),
            Stream::Dark => Some(&["dark"]),
            _ => None,
        }
    }

    pub fn valid_state(&self, state: &str) -> bool {
        match self.alphabet() {
            Some(states) => states.contains(&state),
            None => !state.is_empty(),
        }
    }

    /// Streams whose distinct ids are worth counting.
    pub fn supports_unique_count(&self) -> bool {
        matches!(self, Stream::GpsLocation | Stream::WifiLocation | Stream::Bluetooth)
    }

    /// Streams with a multi-state alphabet where state changes are meaningful.
    pub fn supports_transitions(&self) -> bool {
        matches!(self, Stream::Activity | Stream::Audio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Duration,
    Frequency,
    Transitions,
    UniqueCount,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::Duration => "duration",
            FeatureKind::Frequency => "frequency",
            FeatureKind::Transitions => "transitions",
            FeatureKind::UniqueCount => "unique_count",
        }
    }

    pub fn parse(s: &str) -> Result<FeatureKind> {
        match s {
            "duration" => Ok(FeatureKind::Duration),
            "frequency" => Ok(FeatureKind::Frequency),
            "transitions" => Ok(FeatureKind::Transitions),
            "unique_count" => Ok(FeatureKind::UniqueCount),
            _ => Err(Error::data(format!("unknown feature kind: {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeBin {
    Bedtime,
    Morning,
    Afternoon,
    Evening,
}

impl TimeBin {
    pub const ALL: [TimeBin; 4] = [TimeBin::Bedtime, TimeBin::Morning, TimeBin::Afternoon, TimeBin::Evening];

    pub fn name(&self) -> &'static str {
        match self {
            TimeBin::Bedtime => "bedtime",
            TimeBin::Morning => "morning",
            TimeBin::Afternoon => "afternoon",
            TimeBin::Evening => "evening",
        }
    }

    pub fn parse(s: &str) -> Result<TimeBin> {
        TimeBin::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::data(format!("unknown time bin: {s:?}")))
    }

    /// Half-open local-time range `[start, end)` in seconds of day.
    pub fn range(&self) -> (i64, i64) {
        match self {
            TimeBin::Bedtime => (0, 21_600),
            TimeBin::Morning => (21_600, 43_200),
            TimeBin::Afternoon => (43_200, 64_800),
            TimeBin::Evening => (64_800, SECONDS_PER_DAY),
        }
    }

    fn containing(sec: i64) -> TimeBin {
        debug_assert!((0..SECONDS_PER_DAY).contains(&sec));
        TimeBin::ALL[(sec / 21_600).min(3) as usize]
    }
}

/// One schema column: what to measure, for which stream/state, in which bin.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableDef {
    pub stream: Stream,
    pub state: Option<String>,
    pub kind: FeatureKind,
    pub bin: TimeBin,
}

impl VariableDef {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Duration => {
                let state = self.state.as_deref().ok_or_else(|| {
                    Error::data(format!("duration variable for {} needs a state", self.stream.name()))
                })?;
                if !self.stream.valid_state(state) {
                    return Err(Error::data(format!(
                        "state {state:?} is not valid for stream {}",
                        self.stream.name()
                    )));
                }
            }
            FeatureKind::Frequency => {
                if let Some(state) = self.state.as_deref() {
                    if !self.stream.valid_state(state) {
                        return Err(Error::data(format!(
                            "state {state:?} is not valid for stream {}",
                            self.stream.name()
                        )));
                    }
                }
            }
            FeatureKind::Transitions => {
                if self.state.is_some() {
                    return Err(Error::data("transitions variables must not carry a state".to_string()));
                }
                if !self.stream.supports_transitions() {
                    return Err(Error::data(format!(
                        "stream {} has no state alphabet to transition over",
                        self.stream.name()
                    )));
                }
            }
            FeatureKind::UniqueCount => {
                if self.state.is_some() {
                    return Err(Error::data("unique_count variables must not carry a state".to_string()));
                }
                if !self.stream.supports_unique_count() {
                    return Err(Error::data(format!(
                        "stream {} has no ids to count uniquely",
                        self.stream.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Derived column name, e.g. `activity_walk_duration_morning`. The state
    /// segment is dropped when absent or when it just repeats the stream name
    /// (`conversation_duration_morning`, not `conversation_conversation_...`).
    pub fn name(&self) -> String {
        let stream = self.stream.name();
        match self.state.as_deref() {
            Some(state) if state != stream => {
                format!("{stream}_{state}_{}_{}", self.kind.name(), self.bin.name())
            }
            _ => format!("{stream}_{}_{}", self.kind.name(), self.bin.name()),
        }
    }
}

/// Featurization recipe: the variable list plus the study window and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub variables: Vec<VariableDef>,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub utc_offset_secs: i32,
}

impl FeatureSchema {
    pub fn new(
        variables: Vec<VariableDef>,
        start_date: NaiveDate,
        n_days: usize,
        utc_offset_secs: i32,
    ) -> Result<Self> {
        let schema = FeatureSchema { variables, start_date, n_days, utc_offset_secs };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variables.is_empty() {
            return Err(Error::data("schema has no variables".to_string()));
        }
        if self.n_days == 0 {
            return Err(Error::data("schema must cover at least one day".to_string()));
        }
        if self.utc_offset_secs.abs() >= SECONDS_PER_DAY as i32 {
            return Err(Error::data(format!(
                "utc offset {} seconds is out of range",
                self.utc_offset_secs
            )));
        }
        let mut seen = BTreeSet::new();
        for var in &self.variables {
            var.validate()?;
            if !seen.insert(var.name()) {
                return Err(Error::data(format!("duplicate variable {}", var.name())));
            }
        }
        Ok(())
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name()).collect()
    }

    /// The stock variable list: per bin, state durations and frequencies for
    /// the closed-alphabet streams (unknown states excluded), transition
    /// counts for activity and audio, conversation duration/frequency, and
    /// unique-id counts for location and bluetooth streams. 21 measures x 4
    /// bins = 84 variables.
    pub fn default_variables() -> Vec<VariableDef> {
        let mut vars = Vec::with_capacity(84);
        let stated: [(Stream, &str); 7] = [
            (Stream::Activity, "stationary"),
            (Stream::Activity, "walk"),
            (Stream::Activity, "run"),
            (Stream::Audio, "silence"),
            (Stream::Audio, "voice"),
            (Stream::Audio, "noise"),
            (Stream::Dark, "dark"),
        ];
        for kind in [FeatureKind::Duration, FeatureKind::Frequency] {
            for (stream, state) in stated {
                for bin in TimeBin::ALL {
                    vars.push(VariableDef { stream, state: Some(state.to_string()), kind, bin });
                }
            }
        }
        for stream in [Stream::Activity, Stream::Audio] {
            for bin in TimeBin::ALL {
                vars.push(VariableDef { stream, state: None, kind: FeatureKind::Transitions, bin });
            }
        }
        for kind in [FeatureKind::Duration, FeatureKind::Frequency] {
            for bin in TimeBin::ALL {
                vars.push(VariableDef {
                    stream: Stream::Conversation,
                    state: Some("conversation".to_string()),
                    kind,
                    bin,
                });
            }
        }
        for stream in [Stream::GpsLocation, Stream::WifiLocation, Stream::Bluetooth] {
            for bin in TimeBin::ALL {
                vars.push(VariableDef { stream, state: None, kind: FeatureKind::UniqueCount, bin });
            }
        }
        vars
    }
}

/// One sensed interval. `start`/`end` are unix seconds with `end >= start`;
/// equal endpoints mark a point event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub user_id: String,
    pub stream: Stream,
    pub state: String,
    pub start: i64,
    pub end: i64,
}

impl EventRecord {
    pub fn validate(&self) -> Result<()> {
        if self.user_id.is_empty() {
            return Err(Error::data("event has an empty user id".to_string()));
        }
        if self.end < self.start {
            return Err(Error::data(format!(
                "event for {} ends before it starts ({} < {})",
                self.user_id, self.end, self.start
            )));
        }
        if !self.stream.valid_state(&self.state) {
            return Err(Error::data(format!(
                "state {:?} is not valid for stream {}",
                self.state,
                self.stream.name()
            )));
        }
        Ok(())
    }
}

/// Tensor plus axis labels. Day labels are indices 0..n_days-1.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDataset {
    tensor: Tensor3,
    individuals: Vec<String>,
    variables: Vec<String>,
    days: Vec<usize>,
}

impl TensorDataset {
    pub fn new(
        tensor: Tensor3,
        individuals: Vec<String>,
        variables: Vec<String>,
        n_days: usize,
    ) -> Result<Self> {
        let dims = tensor.dims();
        if dims.0 != individuals.len() || dims.1 != variables.len() || dims.2 != n_days {
            return Err(Error::invalid(format!(
                "labels ({}, {}, {n_days}) do not match tensor dims {dims:?}",
                individuals.len(),
                variables.len()
            )));
        }
        Ok(TensorDataset { tensor, individuals, variables, days: (0..n_days).collect() })
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.tensor
    }

    pub fn individuals(&self) -> &[String] {
        &self.individuals
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn days(&self) -> &[usize] {
        &self.days
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.tensor
    }
}

/// Minutes of `[start, end)` (seconds of day) overlapping each bin.
/// A point interval touches a bin but contributes zero minutes.
pub fn assign_bins(start_sec: i64, end_sec: i64) -> Result<[f64; 4]> {
    if start_sec < 0 || end_sec > SECONDS_PER_DAY || end_sec < start_sec {
        return Err(Error::invalid(format!(
            "interval [{start_sec}, {end_sec}) is not within a single day"
        )));
    }
    let mut out = [0.0; 4];
    for (slot, bin) in out.iter_mut().zip(TimeBin::ALL) {
        let (bs, be) = bin.range();
        let overlap = end_sec.min(be) - start_sec.max(bs);
        if overlap > 0 {
            *slot = overlap as f64 / 60.0;
        }
    }
    Ok(out)
}

/// Bins a piece intersects: positive-length overlap for real intervals, the
/// containing bin for point events.
fn bins_touched(start_sec: i64, end_sec: i64) -> Vec<TimeBin> {
    if end_sec == start_sec {
        return vec![TimeBin::containing(start_sec.min(SECONDS_PER_DAY - 1))];
    }
    TimeBin::ALL
        .iter()
        .copied()
        .filter(|bin| {
            let (bs, be) = bin.range();
            end_sec.min(be) > start_sec.max(bs)
        })
        .collect()
}

/// A record fragment clipped to one local day.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Piece {
    stream: Stream,
    state: String,
    start_sec: i64,
    end_sec: i64,
}

/// Feature vector for one (user, day) slice: one value per schema variable,
/// computed from that day's clipped record pieces. Independent of the input
/// order of the pieces.
fn bin_features(pieces: &[Piece], schema: &FeatureSchema) -> Vec<f64> {
    // transitions need a canonical time ordering per stream
    let mut by_stream: BTreeMap<Stream, Vec<&Piece>> = BTreeMap::new();
    for p in pieces {
        by_stream.entry(p.stream).or_default().push(p);
    }
    for list in by_stream.values_mut() {
        list.sort_by(|a, b| {
            (a.start_sec, a.end_sec, a.state.as_str()).cmp(&(b.start_sec, b.end_sec, b.state.as_str()))
        });
    }

    schema
        .variables
        .iter()
        .map(|var| {
            let list = match by_stream.get(&var.stream) {
                Some(list) => list.as_slice(),
                None => return 0.0,
            };
            match var.kind {
                FeatureKind::Duration => {
                    let state = var.state.as_deref().expect("validated");
                    let mut minutes = 0.0;
                    for p in list {
                        if p.state == state {
                            let bins = assign_bins(p.start_sec, p.end_sec).expect("clipped to day");
                            minutes += bins[bin_index(var.bin)];
                        }
                    }
                    minutes
                }
                FeatureKind::Frequency => {
                    let mut count = 0usize;
                    for p in list {
                        if var.state.as_deref().is_none_or(|s| s == p.state)
                            && bins_touched(p.start_sec, p.end_sec).contains(&var.bin)
                        {
                            count += 1;
                        }
                    }
                    count as f64
                }
                FeatureKind::Transitions => {
                    let mut count = 0usize;
                    for pair in list.windows(2) {
                        if pair[0].state != pair[1].state
                            && TimeBin::containing(pair[1].start_sec.min(SECONDS_PER_DAY - 1))
                                == var.bin
                        {
                            count += 1;
                        }
                    }
                    count as f64
                }
                FeatureKind::UniqueCount => {
                    let mut ids = BTreeSet::new();
                    for p in list {
                        if bins_touched(p.start_sec, p.end_sec).contains(&var.bin) {
                            ids.insert(p.state.as_str());
                        }
                    }
                    ids.len() as f64
                }
            }
        })
        .collect()
}

fn bin_index(bin: TimeBin) -> usize {
    TimeBin::ALL.iter().position(|b| *b == bin).expect("bin in table")
}

/// Counts from a tensor build worth surfacing to the user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Records entirely outside the study window.
    pub dropped_records: usize,
    /// (user, day) slices with no data in any stream, masked as missing.
    pub missing_slices: usize,
}

/// Builds the individuals x variables x days tensor. A (user, day) with no
/// records across all streams becomes a fully masked slice. Record order
/// never affects the output: users are sorted, and per-day extraction is
/// order-independent.
pub fn build_tensor(records: &[EventRecord], schema: &FeatureSchema) -> Result<(TensorDataset, BuildReport)> {
    schema.validate()?;
    if records.is_empty() {
        return Err(Error::data("no event records to featurize".to_string()));
    }
    for rec in records {
        rec.validate()?;
    }

    let start_wall = schema
        .start_date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp();
    let offset = schema.utc_offset_secs as i64;
    let n_days = schema.n_days;

    let users: Vec<String> = records
        .iter()
        .map(|r| r.user_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_index: BTreeMap<&str, usize> =
        users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();

    let mut report = BuildReport::default();
    let mut slices: BTreeMap<(usize, usize), Vec<Piece>> = BTreeMap::new();
    for rec in records {
        let user = user_index[rec.user_id.as_str()];
        let rel_start = rec.start + offset - start_wall;
        let rel_end = rec.end + offset - start_wall;
        let mut kept_any = false;
        let mut cur = rel_start;
        loop {
            let day = cur.div_euclid(SECONDS_PER_DAY);
            let day_end = (day + 1) * SECONDS_PER_DAY;
            let piece_end = rel_end.min(day_end);
            if day >= 0 && (day as usize) < n_days {
                kept_any = true;
                slices.entry((user, day as usize)).or_default().push(Piece {
                    stream: rec.stream,
                    state: rec.state.clone(),
                    start_sec: cur - day * SECONDS_PER_DAY,
                    end_sec: piece_end - day * SECONDS_PER_DAY,
                });
            }
            if piece_end >= rel_end {
                break;
            }
            cur = piece_end;
        }
        if !kept_any {
            report.dropped_records += 1;
        }
    }

    let n_vars = schema.variables.len();
    let mut tensor = Tensor3::new((users.len(), n_vars, n_days))?;
    for i in 0..users.len() {
        for k in 0..n_days {
            match slices.get(&(i, k)) {
                Some(pieces) => {
                    for (j, value) in bin_features(pieces, schema).into_iter().enumerate() {
                        tensor.set(i, j, k, value);
                    }
                }
                None => {
                    report.missing_slices += 1;
                    for j in 0..n_vars {
                        tensor.set_observed(i, j, k, false);
                    }
                }
            }
        }
    }

    let dataset = TensorDataset::new(tensor, users, schema.variable_names(), n_days)?;
    Ok((dataset, report))
}

/// Per-variable min-max scaling over observed cells; a variable with zero
/// observed range maps to all zeros. Masked cells are left untouched.
pub fn minmax_normalize(mut ds: TensorDataset) -> TensorDataset {
    let (i_dim, j_dim, k_dim) = ds.tensor.dims();
    for j in 0..j_dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..k_dim {
            for i in 0..i_dim {
                if ds.tensor.observed(i, j, k) {
                    let v = ds.tensor.get(i, j, k);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        if !lo.is_finite() {
            continue; // no observed cells for this variable
        }
        let range = hi - lo;
        for k in 0..k_dim {
            for i in 0..i_dim {
                if ds.tensor.observed(i, j, k) {
                    let v = ds.tensor.get(i, j, k);
                    let scaled = if range > 0.0 { (v - lo) / range } else { 0.0 };
                    ds.tensor.set(i, j, k, scaled);
                }
            }
        }
    }
    ds
}

/// How many cells were filled per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImputeReport {
    pub imputed_per_variable: Vec<usize>,
}

impl ImputeReport {
    pub fn total(&self) -> usize {
        self.imputed_per_variable.iter().sum()
    }
}

/// Replaces every masked cell with its variable's observed mean and marks it
/// observed. Errors if some variable has no observed cells at all.
pub fn impute_mean(mut ds: TensorDataset) -> Result<(TensorDataset, ImputeReport)> {
    let report = impute_mean_tensor(&mut ds.tensor, Some(&ds.variables))?;
    Ok((ds, report))
}

/// Mean imputation on a bare tensor (variables are mode 2); label-free
/// entry point for tensors loaded from disk.
pub fn impute_mean_tensor(tensor: &mut Tensor3, variables: Option<&[String]>) -> Result<ImputeReport> {
    let (i_dim, j_dim, k_dim) = tensor.dims();
    let mut report = ImputeReport { imputed_per_variable: vec![0; j_dim] };
    for j in 0..j_dim {
        let mut sum = 0.0;
        let mut n = 0usize;
        for k in 0..k_dim {
            for i in 0..i_dim {
                if tensor.observed(i, j, k) {
                    sum += tensor.get(i, j, k);
                    n += 1;
                }
            }
        }
        if n == 0 {
            let name = variables
                .and_then(|v| v.get(j).cloned())
                .unwrap_or_else(|| format!("index {j}"));
            return Err(Error::data(format!(
                "variable {name} has no observed cells to impute from"
            )));
        }
        let mean = sum / n as f64;
        for k in 0..k_dim {
            for i in 0..i_dim {
                if !tensor.observed(i, j, k) {
                    tensor.set(i, j, k, mean);
                    tensor.set_observed(i, j, k, true);
                    report.imputed_per_variable[j] += 1;
                }
            }
        }
    }
    Ok(report)
}
