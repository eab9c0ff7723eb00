use std::collections::HashSet;
use std::fmt::Write as _;

use super::ensemble::ConfidenceMap;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::renderer::Camera;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseudoLabel {
    pub x: usize,
    pub y: usize,
    pub rgb: [f64; 3],
}

/// Trusted teacher pixels of one novel view, in row-major pixel order.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    pub camera: Camera,
    pub labels: Vec<PseudoLabel>,
    pub kappa: f64,
}

pub const PSEUDO_FORMAT_VERSION: u32 = 1;

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixel_indices(&self) -> HashSet<usize> {
        let w = self.camera.width();
        self.labels.iter().map(|l| l.y * w + l.x).collect()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.labels.binary_search_by(|l| (l.y, l.x).cmp(&(y, x))).is_ok()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&PseudoLabel> {
        self.labels
            .binary_search_by(|l| (l.y, l.x).cmp(&(y, x)))
            .ok()
            .map(|i| &self.labels[i])
    }

    /// Plain-text rows `x y r g b` after a version line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# pseudo-labels v{PSEUDO_FORMAT_VERSION}\n");
        for l in &self.labels {
            let _ = writeln!(out, "{} {} {} {} {}", l.x, l.y, l.rgb[0], l.rgb[1], l.rgb[2]);
        }
        out
    }

    /// Parses rows written by [`PseudoLabelSet::to_text`].
    pub fn labels_from_text(text: &str) -> Result<Vec<PseudoLabel>> {
        let bad = |detail: String| Error::Format {
            kind: "pseudo-label rows",
            detail,
        };
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != format!("# pseudo-labels v{PSEUDO_FORMAT_VERSION}") {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(bad(format!("expected 5 fields in `{line}`")));
                }
                let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s}: {e}")));
                let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
                Ok(PseudoLabel {
                    x: int(f[0])?,
                    y: int(f[1])?,
                    rgb: [num(f[2])?, num(f[3])?, num(f[4])?],
                })
            })
            .collect()
    }
}

fn count_for(fraction: f64, total: usize) -> usize {
    // guard against 0.05·100 = 5.000000000000001
    let raw = (fraction * total as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(total)
}

/// Indices of the `count` highest scores among `candidates` (already in
/// row-major order); ties keep row-major order.
fn top_by_score(scores: &[f64], candidates: impl Iterator<Item = usize>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(count);
    idx
}

/// Top-κ selection over the combined confidence map.
///
/// `global_share` of the κ budget is taken from the whole image by epistemic
/// score; the rest from the pixels failing the HSV mask. The two picks are
/// merged without duplicates. With no failing pixels the whole budget goes to
/// the global pick. Labels come from `teacher_render`, the ratio-0 render.
pub fn select_pseudo(
    map: &ConfidenceMap,
    teacher_render: &ImageBuffer,
    kappa: f64,
    global_share: f64,
    camera: &Camera,
) -> Result<PseudoLabelSet> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::invalid(format!("κ must lie in (0, 1], got {kappa}")));
    }
    if !(0.0..=1.0).contains(&global_share) {
        return Err(Error::invalid(format!("global share must lie in [0, 1], got {global_share}")));
    }
    let p = map.scores.len();
    if map.mask.len() != p || teacher_render.pixel_count() != p || map.width * map.height != p {
        return Err(Error::shape("select_pseudo", "scores, mask and render differ in size"));
    }
    if camera.width() != map.width || camera.height() != map.height {
        return Err(Error::shape("select_pseudo", "camera does not match the confidence map"));
    }

    let has_low_contrast = map.mask.iter().any(|m| !m);
    let mut chosen: Vec<usize> = if has_low_contrast {
        let global = top_by_score(&map.scores, 0..p, count_for(kappa * global_share, p));
        let low = top_by_score(
            &map.scores,
            (0..p).filter(|&i| !map.mask[i]),
            count_for(kappa * (1.0 - global_share), p),
        );
        global.into_iter().chain(low).collect()
    } else {
        top_by_score(&map.scores, 0..p, count_for(kappa, p))
    };
    chosen.sort_unstable();
    chosen.dedup();

    let labels = chosen
        .into_iter()
        .map(|i| PseudoLabel {
            x: i % map.width,
            y: i / map.width,
            rgb: teacher_render.pixels()[i],
        })
        .collect();
    Ok(PseudoLabelSet {
        camera: camera.clone(),
        labels,
        kappa,
    })
}

/// Jaccard index `|A ∩ B| / |A ∪ B|` of two pixel sets; 1 for two empty sets.
pub fn map_similarity(a: &HashSet<usize>, b: &HashSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::identity(10.0, w, h).unwrap()
    }

    fn map(scores: Vec<f64>, mask: Vec<bool>, w: usize) -> ConfidenceMap {
        let h = scores.len() / w;
        ConfidenceMap {
            width: w,
            height: h,
            scores,
            mask,
        }
    }

    #[test]
    fn full_budget_selects_everything() {
        let m = map((0..16).map(|i| -(i as f64)).collect(), vec![true; 16], 4);
        let render = ImageBuffer::filled(4, 4, [0.5; 3]).unwrap();
        let s = select_pseudo(&m, &render, 1.0, 0.5, &cam(4, 4)).unwrap();
        assert_eq!(s.len(), 16);
    }

    #[test]
    fn split_budget_between_halves() {
        // first half passes the mask with the best scores
        let scores: Vec<f64> = (0..100).map(|i| -(i as f64)).collect();
        let mask: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let m = map(scores, mask, 10);
        let render = ImageBuffer::filled(10, 10, [0.5; 3]).unwrap();
        let s = select_pseudo(&m, &render, 0.10, 0.5, &cam(10, 10)).unwrap();
        assert_eq!(s.len(), 10);
        let idx = s.pixel_indices();
        assert_eq!(idx.iter().filter(|&&i| i < 50).count(), 5);
        assert_eq!(idx.iter().filter(|&&i| i >= 50).count(), 5);
        assert!((0..5).all(|i| idx.contains(&i)));
        assert!((50..55).all(|i| idx.contains(&i)));
    }

    #[test]
    fn uniform_scores_select_row_major_prefix() {
        let m = map(vec![-0.5; 20], vec![true; 20], 5);
        let render = ImageBuffer::filled(5, 4, [0.5; 3]).unwrap();
        let s = select_pseudo(&m, &render, 0.25, 0.5, &cam(5, 4)).unwrap();
        let idx: Vec<usize> = s.labels.iter().map(|l| l.y * 5 + l.x).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn labels_come_from_render() {
        let m = map(vec![0.0, -1.0, -2.0, -3.0], vec![true; 4], 2);
        let render = ImageBuffer::new(2, 2, vec![[0.1; 3], [0.2; 3], [0.3; 3], [0.4; 3]]).unwrap();
        let s = select_pseudo(&m, &render, 0.5, 0.5, &cam(2, 2)).unwrap();
        assert_eq!(s.labels, vec![
            PseudoLabel { x: 0, y: 0, rgb: [0.1; 3] },
            PseudoLabel { x: 1, y: 0, rgb: [0.2; 3] },
        ]);
        assert!(s.contains(1, 0));
        assert!(!s.contains(0, 1));
        let text = s.to_text();
        assert_eq!(PseudoLabelSet::labels_from_text(&text).unwrap(), s.labels);
    }

    #[test]
    fn rejects_bad_kappa() {
        let m = map(vec![0.0; 4], vec![true; 4], 2);
        let render = ImageBuffer::filled(2, 2, [0.0; 3]).unwrap();
        assert!(select_pseudo(&m, &render, 0.0, 0.5, &cam(2, 2)).is_err());
        assert!(select_pseudo(&m, &render, 1.5, 0.5, &cam(2, 2)).is_err());
    }

    #[test]
    fn jaccard() {
        let a: HashSet<usize> = (0..10).collect();
        let b: HashSet<usize> = (2..12).collect();
        let c: HashSet<usize> = (20..30).collect();
        assert_eq!(map_similarity(&a, &a), 1.0);
        assert_eq!(map_similarity(&a, &c), 0.0);
        assert!((map_similarity(&a, &b) - 8.0 / 12.0).abs() < 1e-15);
    }
}
