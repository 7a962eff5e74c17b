//! Normalization contexts: the sets of pixels whose statistics normalize a
//! given pixel.
//!
//! A [`Partition`] splits the valid pixels of one map (or of a batch) into
//! disjoint contexts. Stacking partitions of several sizes gives a
//! [`ContextHierarchy`], where each pixel belongs to one context per level.
//!
//! Spatial grids depend only on geometry. Depth-domain partitions
//! (percentile and range bins) are computed from ground-truth values only,
//! so prediction and ground truth are always normalized over the same pixel
//! sets. Invalid pixels never belong to any context.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// How a level splits the pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextKind {
    /// `S x S` grid over the image plane.
    Spatial,
    /// `S` equal-count bins of the sorted ground-truth values.
    DepthPercentile,
    /// `S` equal-width bins of the ground-truth value range.
    DepthRange,
}

impl ContextKind {
    pub fn name(self) -> &'static str {
        match self {
            ContextKind::Spatial => "spatial",
            ContextKind::DepthPercentile => "depth_percentile",
            ContextKind::DepthRange => "depth_range",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" | "s" | "hdn_s" => Ok(ContextKind::Spatial),
            "depth_percentile" | "dp" | "hdn_dp" => Ok(ContextKind::DepthPercentile),
            "depth_range" | "dr" | "hdn_dr" => Ok(ContextKind::DepthRange),
            other => Err(Error::Parameter(format!("unknown context kind '{other}'"))),
        }
    }
}

/// Kind plus the list of level sizes `S` to stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpec {
    kind: ContextKind,
    sizes: Vec<usize>,
}

impl LevelSpec {
    /// Sizes must be non-empty, distinct and at least 1.
    pub fn new(kind: ContextKind, sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Parameter("level list is empty".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Parameter("level sizes must be >= 1".into()));
        }
        for (i, s) in sizes.iter().enumerate() {
            if sizes[..i].contains(s) {
                return Err(Error::Parameter(format!("duplicate level size {s}")));
            }
        }
        Ok(Self { kind, sizes })
    }

    /// Grid sizes {1, 2, 4, 8}.
    pub fn hdn_spatial() -> Self {
        Self {
            kind: ContextKind::Spatial,
            sizes: vec![1, 2, 4, 8],
        }
    }

    /// Bin counts {1, 2, 4} for the depth-domain kinds.
    pub fn hdn_depth(kind: ContextKind) -> Self {
        Self {
            kind,
            sizes: vec![1, 2, 4],
        }
    }

    pub fn kind(&self) -> ContextKind {
        self.kind
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// One level's decomposition of valid pixels into disjoint, non-empty
/// contexts. Members are stored as ascending linear indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    tag: String,
    contexts: Vec<Vec<usize>>,
    assignment: Vec<Option<usize>>,
}

impl Partition {
    /// Builds a partition over a pixel space of `pixel_count` indices.
    /// Empty contexts are dropped; overlapping or out-of-range members are
    /// rejected.
    pub fn from_contexts(
        tag: impl Into<String>,
        pixel_count: usize,
        contexts: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut assignment = vec![None; pixel_count];
        let mut kept = Vec::with_capacity(contexts.len());
        for mut members in contexts.into_iter().filter(|c| !c.is_empty()) {
            members.sort_unstable();
            let id = kept.len();
            for &p in &members {
                match assignment.get_mut(p) {
                    None => {
                        return Err(Error::Parameter(format!(
                            "pixel {p} outside pixel space of {pixel_count}"
                        )))
                    }
                    Some(Some(_)) => {
                        return Err(Error::Parameter(format!("pixel {p} in two contexts")))
                    }
                    Some(slot) => *slot = Some(id),
                }
            }
            kept.push(members);
        }
        Ok(Self {
            tag: tag.into(),
            contexts: kept,
            assignment,
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn contexts(&self) -> &[Vec<usize>] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Size of the pixel space the partition indexes into.
    pub fn pixel_count(&self) -> usize {
        self.assignment.len()
    }

    /// Context id of a pixel, `None` for uncovered (invalid) pixels.
    pub fn context_of(&self, pixel: usize) -> Option<usize> {
        self.assignment.get(pixel).copied().flatten()
    }

    /// Number of covered pixels.
    pub fn covered(&self) -> usize {
        self.contexts.iter().map(Vec::len).sum()
    }

    /// Deterministic text listing: one `ctx<k>: <idx> <idx> ...` line per
    /// context, contexts ordered by smallest member, members ascending.
    pub fn dump(&self) -> String {
        let mut order: Vec<&Vec<usize>> = self.contexts.iter().collect();
        order.sort_by_key(|c| c[0]);
        let mut out = String::new();
        for (k, members) in order.into_iter().enumerate() {
            let _ = write!(out, "ctx{k}:");
            for m in members {
                let _ = write!(out, " {m}");
            }
            out.push('\n');
        }
        out
    }
}

fn require_valid(map: &DepthMap) -> Result<Vec<usize>> {
    let idx = map.valid_indices();
    if idx.is_empty() {
        return Err(Error::EmptyInput("map has no valid pixels"));
    }
    Ok(idx)
}

fn require_levels(s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Parameter("level size S must be >= 1".into()));
    }
    Ok(())
}

/// One context holding every valid pixel.
pub fn global_context(map: &DepthMap) -> Result<Partition> {
    let idx = require_valid(map)?;
    Partition::from_contexts("global", map.len(), vec![idx])
}

/// One context spanning the valid pixels of all maps. Map `k`'s pixels are
/// offset by the total pixel count of maps `0..k`.
pub fn batch_context(maps: &[DepthMap]) -> Result<Partition> {
    if maps.is_empty() {
        return Err(Error::EmptyInput("batch is empty"));
    }
    let mut members = Vec::new();
    let mut base = 0;
    for map in maps {
        members.extend(require_valid(map)?.into_iter().map(|i| base + i));
        base += map.len();
    }
    Partition::from_contexts("batch", base, vec![members])
}

/// `S x S` grid: pixel `(r, c)` falls in cell `(r*S/H, c*S/W)` (integer
/// division). Cells without valid pixels are dropped, so `S` may exceed the
/// image dimensions.
pub fn spatial_grid(map: &DepthMap, s: usize) -> Result<Partition> {
    require_levels(s)?;
    let (h, w) = (map.height(), map.width());
    let mut cells = vec![Vec::new(); s * s];
    for i in map.valid_indices() {
        let (r, c) = (i / w, i % w);
        cells[(r * s / h) * s + c * s / w].push(i);
    }
    Partition::from_contexts(format!("spatial:S={s}"), map.len(), cells)
}

/// Sorts valid pixels by `(value, linear index)` and splits the order into
/// `S` contiguous runs of sizes `ceil(M/S)` then `floor(M/S)`, larger runs
/// first. When `S > M` the trailing runs are empty and dropped.
pub fn depth_percentile_bins(gt: &DepthMap, s: usize) -> Result<Partition> {
    require_levels(s)?;
    let mut idx = require_valid(gt)?;
    let v = gt.values();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let m = idx.len();
    let (base, extra) = (m / s, m % s);
    let mut runs = Vec::with_capacity(s);
    let mut start = 0;
    for k in 0..s {
        let len = base + usize::from(k < extra);
        runs.push(idx[start..start + len].to_vec());
        start += len;
    }
    Partition::from_contexts(format!("depth_percentile:S={s}"), gt.len(), runs)
}

/// Bin index of `v` among `s` equal-width bins over `[lo, hi]`; the maximum
/// is clamped into the last bin.
pub(crate) fn range_bin(v: f64, lo: f64, hi: f64, s: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let width = (hi - lo) / s as f64;
    let k = libm::floor((v - lo) / width);
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(s - 1)
    }
}

/// Splits `[min, max]` of the valid ground-truth values into `S` equal-width
/// half-open bins (the last one closed). Empty bins are dropped; a constant
/// map yields one context.
pub fn depth_range_bins(gt: &DepthMap, s: usize) -> Result<Partition> {
    require_levels(s)?;
    let idx = require_valid(gt)?;
    let v = gt.values();
    let (lo, hi) = idx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(v[i]), hi.max(v[i]))
        });
    let mut bins = vec![Vec::new(); s];
    for i in idx {
        bins[range_bin(v[i], lo, hi, s)].push(i);
    }
    Partition::from_contexts(format!("depth_range:S={s}"), gt.len(), bins)
}

/// Builds one level of the given kind.
pub fn build_level(gt: &DepthMap, kind: ContextKind, s: usize) -> Result<Partition> {
    match kind {
        ContextKind::Spatial => spatial_grid(gt, s),
        ContextKind::DepthPercentile => depth_percentile_bins(gt, s),
        ContextKind::DepthRange => depth_range_bins(gt, s),
    }
}

/// A stack of partitions over the same pixel space, with each pixel's list
/// of `(level, context)` memberships.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextHierarchy {
    levels: Vec<Partition>,
    per_pixel: Vec<Vec<(usize, usize)>>,
}

impl ContextHierarchy {
    /// All partitions must index the same pixel space.
    pub fn from_partitions(levels: Vec<Partition>) -> Result<Self> {
        let n = levels
            .first()
            .map(Partition::pixel_count)
            .ok_or(Error::EmptyInput("hierarchy has no levels"))?;
        if levels.iter().any(|p| p.pixel_count() != n) {
            return Err(Error::Parameter(
                "partitions index different pixel spaces".into(),
            ));
        }
        let mut per_pixel = vec![Vec::new(); n];
        for (l, part) in levels.iter().enumerate() {
            for (c, members) in part.contexts().iter().enumerate() {
                for &p in members {
                    per_pixel[p].push((l, c));
                }
            }
        }
        Ok(Self { levels, per_pixel })
    }

    /// Single global level.
    pub fn global(map: &DepthMap) -> Result<Self> {
        Self::from_partitions(vec![global_context(map)?])
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn pixel_count(&self) -> usize {
        self.per_pixel.len()
    }

    /// `U_i`: the `(level, context id)` memberships of pixel `i`.
    pub fn memberships(&self, pixel: usize) -> &[(usize, usize)] {
        &self.per_pixel[pixel]
    }
}

/// One partition per size in `spec`, built from the ground truth's values
/// (depth-domain kinds) or geometry (spatial) over its valid pixels.
pub fn build_hierarchy(gt: &DepthMap, spec: &LevelSpec) -> Result<ContextHierarchy> {
    let levels = spec
        .sizes()
        .iter()
        .map(|&s| build_level(gt, spec.kind(), s))
        .collect::<Result<Vec<_>>>()?;
    ContextHierarchy::from_partitions(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> DepthMap {
        DepthMap::from_values(1, values.len(), values.to_vec()).unwrap()
    }

    fn sizes(p: &Partition) -> Vec<usize> {
        let mut s: Vec<usize> = p.contexts().iter().map(Vec::len).collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn global_counts_valid_pixels() {
        let m = DepthMap::from_values(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(sizes(&global_context(&m).unwrap()), vec![4]);
        let m = m.with_mask(vec![true, true, false, true]).unwrap();
        let g = global_context(&m).unwrap();
        assert_eq!(g.contexts(), &[vec![0, 1, 3]]);
        assert_eq!(g.context_of(2), None);
        let none = m.with_mask(vec![false; 4]).unwrap();
        assert_eq!(
            global_context(&none),
            Err(Error::EmptyInput("map has no valid pixels"))
        );
    }

    #[test]
    fn global_matches_spatial_one() {
        let m = DepthMap::new(3, 5, (0..15).map(f64::from).collect(), {
            let mut v = vec![true; 15];
            v[7] = false;
            v
        })
        .unwrap();
        assert_eq!(
            global_context(&m).unwrap().contexts(),
            spatial_grid(&m, 1).unwrap().contexts()
        );
    }

    #[test]
    fn batch_offsets_and_median() {
        let a = row(&[1.0, 2.0]);
        let b = row(&[3.0, 4.0]);
        let p = batch_context(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.contexts(), &[vec![0, 1, 2, 3]]);
        let vals = [a.values(), b.values()].concat();
        let members: Vec<f64> = p.contexts()[0].iter().map(|&i| vals[i]).collect();
        assert_eq!(crate::normalization::median(&members).unwrap(), 2.5);
        assert_eq!(
            batch_context(core::slice::from_ref(&a)).unwrap().contexts(),
            global_context(&a).unwrap().contexts()
        );
        assert_eq!(
            sizes(&batch_context(&[row(&[1.0]), row(&[3.0])]).unwrap()),
            vec![2]
        );
        assert!(batch_context(&[]).is_err());
    }

    #[test]
    fn spatial_quadrants() {
        let m = DepthMap::from_values(4, 4, vec![0.0; 16]).unwrap();
        let p = spatial_grid(&m, 2).unwrap();
        assert_eq!(p.contexts()[0], vec![0, 1, 4, 5]);
        assert_eq!(sizes(&p), vec![4, 4, 4, 4]);
    }

    #[test]
    fn spatial_non_divisible_floor_rule() {
        // rows/cols 0,1 -> cell 0; row/col 2 -> cell 1
        let m = DepthMap::from_values(3, 3, vec![0.0; 9]).unwrap();
        let p = spatial_grid(&m, 2).unwrap();
        assert_eq!(
            p.contexts(),
            &[vec![0, 1, 3, 4], vec![2, 5], vec![6, 7], vec![8]]
        );
    }

    #[test]
    fn spatial_rejects_zero_and_allows_oversized() {
        let m = DepthMap::from_values(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(spatial_grid(&m, 0), Err(Error::Parameter(_))));
        assert_eq!(spatial_grid(&m, 5).unwrap().len(), 4);
    }

    #[test]
    fn percentile_sort_and_split() {
        let p = depth_percentile_bins(&row(&[5.0, 1.0, 3.0, 9.0]), 2).unwrap();
        assert_eq!(p.contexts(), &[vec![1, 2], vec![0, 3]]);
        let p = depth_percentile_bins(&row(&[1.0, 2.0, 3.0, 4.0, 5.0]), 2).unwrap();
        assert_eq!(p.contexts(), &[vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(
            depth_percentile_bins(&row(&[1.0, 2.0]), 1).unwrap().len(),
            1
        );
    }

    #[test]
    fn percentile_ties_break_by_index() {
        let p = depth_percentile_bins(&row(&[2.0, 1.0, 2.0, 2.0]), 2).unwrap();
        assert_eq!(p.contexts(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn range_bins() {
        let p = depth_range_bins(&row(&[0.0, 1.0, 2.0, 10.0]), 2).unwrap();
        assert_eq!(p.contexts(), &[vec![0, 1, 2], vec![3]]);
        let p = depth_range_bins(&row(&[4.0; 5]), 4).unwrap();
        assert_eq!(p.contexts(), &[vec![0, 1, 2, 3, 4]]);
        assert_eq!(range_bin(10.0, 0.0, 10.0, 4), 3);
        assert_eq!(range_bin(0.0, 0.0, 10.0, 4), 0);
    }

    #[test]
    fn level_spec_validation() {
        assert!(LevelSpec::new(ContextKind::Spatial, vec![]).is_err());
        assert!(LevelSpec::new(ContextKind::Spatial, vec![0, 1]).is_err());
        assert!(LevelSpec::new(ContextKind::Spatial, vec![2, 2]).is_err());
        assert_eq!(LevelSpec::hdn_spatial().sizes(), &[1, 2, 4, 8]);
    }

    #[test]
    fn hierarchy_memberships() {
        let m = DepthMap::from_values(8, 8, (0..64).map(f64::from).collect()).unwrap();
        let h = build_hierarchy(&m, &LevelSpec::hdn_spatial()).unwrap();
        assert_eq!(h.levels().len(), 4);
        for i in 0..64 {
            assert_eq!(h.memberships(i).len(), 4);
        }
        let h = build_hierarchy(&m, &LevelSpec::hdn_depth(ContextKind::DepthRange)).unwrap();
        assert_eq!(h.levels().len(), 3);
        assert_eq!(h.levels()[0].len(), 1);
    }

    #[test]
    fn dump_format() {
        assert_eq!(
            global_context(&row(&[1.0, 2.0])).unwrap().dump(),
            "ctx0: 0 1\n"
        );
        let m = DepthMap::from_values(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(
            spatial_grid(&m, 2).unwrap().dump(),
            "ctx0: 0\nctx1: 1\nctx2: 2\nctx3: 3\n"
        );
        let p = depth_percentile_bins(&row(&[5.0, 1.0, 3.0, 9.0]), 2).unwrap();
        assert_eq!(p.dump(), "ctx0: 0 3\nctx1: 1 2\n");
    }
}
