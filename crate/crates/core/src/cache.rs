//! The cache of evaluated points, dominance and the `Best` ordering.
//!
//! `best(a, b)` prefers `a` when `a` dominates `b` or has a smaller violation,
//! symmetrically for `b`, and otherwise keeps the older point. Because
//! dominance between infeasible points requires `h(a) <= h(b)`, the
//! comparator is exactly the lexicographic order on `(h, f, gen)`; the cache
//! keeps its entries sorted under that key so elites and incumbents are
//! cheap to read.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::ops::Bound;
use std::path::Path;

use crate::blackbox::{EvalStatus, Evaluation};
use crate::error::{Error, Result};
use crate::util::fmt_real;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub x: Vec<f64>,
    pub f: f64,
    pub h: f64,
    pub status: EvalStatus,
    /// Insertion index; smaller is older.
    pub gen: usize,
}

impl CacheEntry {
    pub fn is_feasible(&self) -> bool {
        self.h == 0.0
    }

    fn key(&self) -> SortKey {
        SortKey {
            h: self.h + 0.0,
            f: self.f + 0.0,
            gen: self.gen,
        }
    }
}

/// Dominance in the progressive-barrier sense.
///
/// Feasible points compare on `f`, infeasible points on `(f, h)` in the
/// Pareto sense, with at least one strict inequality. A feasible and an
/// infeasible point never dominate each other.
pub fn dominates(a: &CacheEntry, b: &CacheEntry) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, true) => a.f < b.f,
        (false, false) => a.f <= b.f && a.h <= b.h && (a.f < b.f || a.h < b.h),
        _ => false,
    }
}

/// The better of two entries; ties and incomparable pairs go to the older.
pub fn best<'a>(a: &'a CacheEntry, b: &'a CacheEntry) -> &'a CacheEntry {
    if dominates(a, b) || a.h < b.h {
        a
    } else if dominates(b, a) || b.h < a.h {
        b
    } else if a.gen <= b.gen {
        a
    } else {
        b
    }
}

/// Total order consistent with [`best`]: earlier means better.
pub fn best_order(a: &CacheEntry, b: &CacheEntry) -> Ordering {
    a.key().cmp(&b.key())
}

#[derive(Debug, Clone, Copy)]
struct SortKey {
    h: f64,
    f: f64,
    gen: usize,
}

impl PartialEq for SortKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SortKey {}

impl PartialOrd for SortKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SortKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.h
            .total_cmp(&other.h)
            .then(self.f.total_cmp(&other.f))
            .then(self.gen.cmp(&other.gen))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted(usize),
    Duplicate(usize),
}

impl InsertOutcome {
    pub fn gen(self) -> usize {
        match self {
            InsertOutcome::Inserted(g) | InsertOutcome::Duplicate(g) => g,
        }
    }
}

/// Bit pattern used for duplicate detection. Signed zeros compare equal.
fn coord_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Cache {
    entries: Vec<CacheEntry>,
    index: HashMap<Vec<u64>, usize>,
    order: BTreeSet<SortKey>,
}

impl Cache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn get(&self, gen: usize) -> Option<&CacheEntry> {
        self.entries.get(gen)
    }

    pub fn lookup(&self, x: &[f64]) -> Option<&CacheEntry> {
        self.index.get(&coord_key(x)).map(|&g| &self.entries[g])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.index.contains_key(&coord_key(x))
    }

    pub fn insert(&mut self, e: &Evaluation) -> InsertOutcome {
        let key = coord_key(&e.x);
        if let Some(&g) = self.index.get(&key) {
            return InsertOutcome::Duplicate(g);
        }
        let gen = self.entries.len();
        let entry = CacheEntry {
            x: e.x.clone(),
            f: e.f,
            h: e.h,
            status: e.status,
            gen,
        };
        self.order.insert(entry.key());
        self.index.insert(key, gen);
        self.entries.push(entry);
        InsertOutcome::Inserted(gen)
    }

    /// Entries in `Best` order.
    pub fn sorted(&self) -> impl Iterator<Item = &CacheEntry> + '_ {
        self.order.iter().map(|k| &self.entries[k.gen])
    }

    /// The first `n_e` entries in `Best` order.
    pub fn elites(&self, n_e: usize) -> Vec<&CacheEntry> {
        self.sorted().take(n_e).collect()
    }

    pub fn best_feasible(&self) -> Option<&CacheEntry> {
        self.sorted().next().filter(|e| e.is_feasible())
    }

    pub fn best_infeasible(&self) -> Option<&CacheEntry> {
        let last_feasible = SortKey {
            h: 0.0,
            f: f64::INFINITY,
            gen: usize::MAX,
        };
        self.order
            .range((Bound::Excluded(last_feasible), Bound::Unbounded))
            .next()
            .map(|k| &self.entries[k.gen])
    }

    pub fn incumbents(&self) -> (Option<&CacheEntry>, Option<&CacheEntry>) {
        (self.best_feasible(), self.best_infeasible())
    }

    /// Writes `gen, x_1..x_n, f, h, status` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.entries.first().map_or(0, |e| e.x.len());
        let mut header = vec!["gen".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["f", "h", "status"].map(String::from));
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.gen.to_string()];
            row.extend(e.x.iter().map(|v| fmt_real(*v)));
            row.push(fmt_real(e.f));
            row.push(fmt_real(e.h));
            row.push(e.status.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a dump written by [`Cache::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut cache = Cache::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                msg: msg.to_string(),
            };
            if rec.len() < 4 {
                return Err(bad("too few columns"));
            }
            let nums = rec
                .iter()
                .take(rec.len() - 1)
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("malformed number"))?;
            let status = match &rec[rec.len() - 1] {
                "ok" => EvalStatus::Ok,
                "failed" => EvalStatus::Failed,
                _ => return Err(bad("status must be ok or failed")),
            };
            let (x, fh) = nums.split_at(nums.len() - 2);
            cache.insert(&Evaluation {
                x: x.to_vec(),
                f: fh[0],
                h: fh[1],
                c: Vec::new(),
                status,
            });
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(f: f64, h: f64, gen: usize) -> CacheEntry {
        CacheEntry {
            x: vec![gen as f64],
            f,
            h,
            status: EvalStatus::Ok,
            gen,
        }
    }

    fn eval(x: Vec<f64>, f: f64, h: f64) -> Evaluation {
        Evaluation {
            x,
            f,
            h,
            c: vec![],
            status: if h.is_finite() {
                EvalStatus::Ok
            } else {
                EvalStatus::Failed
            },
        }
    }

    #[test]
    fn insert_and_duplicates() {
        let mut c = Cache::new();
        assert_eq!(c.insert(&eval(vec![1.0, 2.0], 3.0, 0.0)), InsertOutcome::Inserted(0));
        assert_eq!(c.insert(&eval(vec![1.0, 2.0], 9.0, 1.0)), InsertOutcome::Duplicate(0));
        assert_eq!(c.insert(&eval(vec![1.0, 2.5], 3.0, 0.0)), InsertOutcome::Inserted(1));
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(0).unwrap().f, 3.0);
    }

    #[test]
    fn signed_zero_is_a_duplicate() {
        let mut c = Cache::new();
        c.insert(&eval(vec![0.0], 1.0, 0.0));
        assert_eq!(c.insert(&eval(vec![-0.0], 1.0, 0.0)), InsertOutcome::Duplicate(0));
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&entry(1.0, 0.0, 0), &entry(2.0, 0.0, 1)));
        assert!(dominates(&entry(1.0, 2.0, 0), &entry(2.0, 3.0, 1)));
        assert!(!dominates(&entry(1.0, 0.0, 0), &entry(0.0, 1.0, 1)));
        assert!(!dominates(&entry(1.0, 1.0, 0), &entry(1.0, 1.0, 1)));
    }

    #[test]
    fn best_examples() {
        let (a, b) = (entry(5.0, 0.0, 0), entry(5.0, 0.0, 1));
        assert_eq!(best(&a, &b).gen, 0);
        assert_eq!(best(&b, &a).gen, 0);
        let (a, b) = (entry(9.0, 1.0, 0), entry(1.0, 4.0, 1));
        assert_eq!(best(&a, &b).gen, 0);
        let (a, b) = (entry(1.0, 0.0, 0), entry(3.0, 0.0, 1));
        assert_eq!(best(&a, &b).gen, 0);
    }

    #[test]
    fn elites_examples() {
        let mut c = Cache::new();
        c.insert(&eval(vec![0.0], 5.0, 0.0));
        c.insert(&eval(vec![1.0], 1.0, 3.0));
        c.insert(&eval(vec![2.0], 2.0, 1.0));
        let e: Vec<_> = c.elites(2).iter().map(|e| (e.f, e.h)).collect();
        assert_eq!(e, vec![(5.0, 0.0), (2.0, 1.0)]);
        assert_eq!(c.elites(10).len(), 3);
        assert!(Cache::new().elites(4).is_empty());
    }

    #[test]
    fn incumbents_examples() {
        let mut c = Cache::new();
        c.insert(&eval(vec![0.0], 3.0, 0.0));
        c.insert(&eval(vec![1.0], 1.0, 2.0));
        let (bf, bi) = c.incumbents();
        assert_eq!(bf.unwrap().f, 3.0);
        assert_eq!(bi.unwrap().h, 2.0);

        let mut only_failed = Cache::new();
        only_failed.insert(&eval(vec![0.0], f64::INFINITY, f64::INFINITY));
        let (bf, bi) = only_failed.incumbents();
        assert!(bf.is_none());
        assert_eq!(bi.unwrap().gen, 0);
    }

    #[test]
    fn failed_entries_sort_last() {
        let mut c = Cache::new();
        c.insert(&eval(vec![0.0], f64::INFINITY, f64::INFINITY));
        c.insert(&eval(vec![1.0], 100.0, 1e300));
        assert_eq!(c.elites(1)[0].gen, 1);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.csv");
        let mut c = Cache::new();
        c.insert(&eval(vec![0.1, 1.0 / 3.0], -2.5, 0.0));
        c.insert(&eval(vec![7.0, 8.0], f64::INFINITY, f64::INFINITY));
        c.write_csv(&path).unwrap();
        let back = Cache::read_csv(&path).unwrap();
        assert_eq!(back.entries(), c.entries());
    }
}
