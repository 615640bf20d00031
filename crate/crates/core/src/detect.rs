//! Blob detector, image- and box-level fusion, geolocation, and detection scoring.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::wrap_180;
use crate::scene::{Band, FireTruth, Raster, RasterMeta, KM_PER_DEG_LAT, KM_PER_DEG_LON};
use crate::time::Epoch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    /// Center column, px.
    pub x: f64,
    /// Center row, px.
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    /// 0 for fused boxes, otherwise the 1-based model that produced the box.
    pub source_model: u32,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn span(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.x - self.w / 2.0, self.x + self.w / 2.0),
            (self.y - self.h / 2.0, self.y + self.h / 2.0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    #[serde(rename = "box")]
    pub box_: BoundingBox,
    pub lat: f64,
    pub lon: f64,
    pub time: Epoch,
    pub satellite: usize,
}

impl Detection {
    pub fn from_box(
        box_: BoundingBox,
        meta: &RasterMeta,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let (lat, lon) = geolocate(&box_, meta, width, height)?;
        Ok(Detection {
            box_,
            lat,
            lon,
            time: meta.time(),
            satellite: meta.satellite,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorProfile {
    /// Intensity above the background estimate a pixel needs to count.
    pub threshold: f64,
    pub min_blob_px: usize,
    pub confidence_gain: f64,
    /// Stand-in for the detector's mean average precision.
    pub map_value: f64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        Self::early_fusion()
    }
}

impl DetectorProfile {
    fn with_map(map_value: f64) -> Self {
        DetectorProfile {
            threshold: 0.15,
            min_blob_px: 2,
            confidence_gain: 1.0,
            map_value,
        }
    }

    pub fn band6() -> Self {
        Self::with_map(0.7043)
    }

    pub fn band7() -> Self {
        Self::with_map(0.6547)
    }

    pub fn early_fusion() -> Self {
        Self::with_map(0.6914)
    }

    pub fn late_fusion() -> Self {
        Self::with_map(0.6726)
    }

    /// Rate at which the detector reports a fire where there is none.
    pub fn false_rate(&self) -> f64 {
        1.0 - self.map_value
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.map_value > 0.0 && self.map_value < 1.0) {
            return Err(Error::invalid(format!(
                "map_value {} outside (0, 1)",
                self.map_value
            )));
        }
        if !(self.threshold >= 0.0) || !(self.confidence_gain >= 0.0) {
            return Err(Error::invalid(
                "detector threshold and gain must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| {
            if a + b == 0 {
                0.0
            } else {
                a as f64 / (a + b) as f64
            }
        };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        DetectionMetrics {
            precision,
            recall,
            f_score,
            tp,
            fp,
            fn_,
        }
    }
}

/// Connected bright regions of a raster, most confident first.
pub fn detect_blobs(raster: &Raster, profile: &DetectorProfile) -> Vec<BoundingBox> {
    let (w, h) = (raster.width, raster.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let bg = median(&raster.pixels);
    let level = bg + profile.threshold;
    let hot: Vec<bool> = raster.pixels.iter().map(|&p| p > level).collect();
    let source_model = match raster.band {
        Band::Band6 => 1,
        Band::Band7 => 2,
        Band::Fused => 1,
    };
    let mut boxes = Vec::new();
    for comp in components(&hot, w, h) {
        if comp.len() < profile.min_blob_px.max(1) {
            continue;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
        let mut peak = f64::MIN;
        for &i in &comp {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            peak = peak.max(raster.pixels[i]);
        }
        let (x0, y0) = (x0.saturating_sub(1), y0.saturating_sub(1));
        let (x1, y1) = ((x1 + 1).min(w - 1), (y1 + 1).min(h - 1));
        let area = comp.len() as f64;
        let confidence = (profile.confidence_gain * (peak - level) * (1.0 - 1.0 / (1.0 + area)))
            .clamp(0.0, 0.99);
        boxes.push(BoundingBox {
            x: (x0 + x1) as f64 / 2.0,
            y: (y0 + y1) as f64 / 2.0,
            w: (x1 - x0 + 1) as f64,
            h: (y1 - y0 + 1) as f64,
            confidence,
            source_model,
        });
    }
    boxes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    boxes
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// 8-connected components as lists of row-major pixel indices, in raster scan order of their
/// first pixel.
pub fn components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Per-image weights from the dominant principal component of the image covariance.
pub fn early_fuse_weights(rasters: &[&Raster]) -> Result<Vec<f64>> {
    check_stack(rasters)?;
    let f = rasters.len();
    let equal = vec![1.0 / f as f64; f];
    let n = rasters[0].pixels.len();
    if n < 2 {
        return Ok(equal);
    }
    let means: Vec<f64> = rasters
        .iter()
        .map(|r| r.pixels.iter().sum::<f64>() / n as f64)
        .collect();
    let cov = DMatrix::from_fn(f, f, |a, b| {
        let (pa, pb) = (&rasters[a].pixels, &rasters[b].pixels);
        pa.iter()
            .zip(pb)
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    if cov.trace() <= 0.0 {
        return Ok(equal);
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let pc = eig.eigenvectors.column(top);
    let total: f64 = pc.iter().map(|c| c.abs()).sum();
    if !(total > 0.0) {
        return Ok(equal);
    }
    Ok(pc.iter().map(|c| c.abs() / total).collect())
}

/// Principal-component fusion of co-registered bands.
pub fn early_fuse(rasters: &[&Raster]) -> Result<(Raster, Vec<f64>)> {
    check_stack(rasters)?;
    let first = rasters[0];
    let f = rasters.len();
    if rasters.iter().all(|r| r.pixels == first.pixels) {
        let fused = Raster {
            band: Band::Fused,
            ..first.clone()
        };
        return Ok((fused, vec![1.0 / f as f64; f]));
    }
    let weights = early_fuse_weights(rasters)?;
    let pixels = (0..first.pixels.len())
        .map(|i| {
            let v: f64 = rasters
                .iter()
                .zip(&weights)
                .map(|(r, w)| w * r.pixels[i])
                .sum();
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok((
        Raster {
            width: first.width,
            height: first.height,
            band: Band::Fused,
            pixels,
            meta: first.meta,
        },
        weights,
    ))
}

fn check_stack(rasters: &[&Raster]) -> Result<()> {
    if rasters.len() < 2 {
        return Err(Error::invalid(format!(
            "early fusion needs at least 2 rasters, got {}",
            rasters.len()
        )));
    }
    let (w, h) = (rasters[0].width, rasters[0].height);
    for r in rasters {
        if r.width != w || r.height != h || r.pixels.len() != w * h {
            return Err(Error::invalid(format!(
                "raster is {}x{} ({} px), expected {w}x{h}",
                r.width,
                r.height,
                r.pixels.len()
            )));
        }
    }
    Ok(())
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ((ax0, ax1), (ay0, ay1)) = a.span();
    let ((bx0, bx1), (by0, by1)) = b.span();
    let ix = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let iy = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Clusters of indices into `boxes`: each box joins the first cluster whose founding member
/// overlaps it by more than `iou_threshold`.
pub fn cluster_boxes(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        match clusters
            .iter_mut()
            .find(|c| iou(&boxes[c[0]], b) > iou_threshold)
        {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters
}

/// Confidence-weighted box fusion across `n_models` detectors.
pub fn late_fuse(
    boxes: &[BoundingBox],
    n_models: u32,
    iou_threshold: f64,
) -> Result<Vec<BoundingBox>> {
    if n_models == 0 {
        return Err(Error::invalid("late fusion needs at least one model"));
    }
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} outside (0, 1)"
        )));
    }
    if let Some(b) = boxes
        .iter()
        .find(|b| b.source_model == 0 || b.source_model > n_models)
    {
        return Err(Error::invalid(format!(
            "box source model {} outside 1..={n_models}",
            b.source_model
        )));
    }
    let f = n_models as f64;
    Ok(cluster_boxes(boxes, iou_threshold)
        .into_iter()
        .map(|members| {
            let a = members.len() as f64;
            let csum: f64 = members.iter().map(|&i| boxes[i].confidence).sum();
            let avg = |get: fn(&BoundingBox) -> f64| -> f64 {
                if csum > 0.0 {
                    members
                        .iter()
                        .map(|&i| get(&boxes[i]) * boxes[i].confidence)
                        .sum::<f64>()
                        / csum
                } else {
                    members.iter().map(|&i| get(&boxes[i])).sum::<f64>() / a
                }
            };
            BoundingBox {
                x: avg(|b| b.x),
                y: avg(|b| b.y),
                w: avg(|b| b.w),
                h: avg(|b| b.h),
                confidence: (a.min(f) * csum / (a * f)).clamp(0.0, 1.0),
                source_model: 0,
            }
        })
        .collect())
}

/// Latitude and longitude of a box center.
pub fn geolocate(
    b: &BoundingBox,
    meta: &RasterMeta,
    width: usize,
    height: usize,
) -> Result<(f64, f64)> {
    let dx = b.x - (width / 2) as f64;
    let dy = -(b.y - (height / 2) as f64);
    geolocate_offset(dx, dy, meta)
}

/// Geolocation of an offset (right, up) in pixels from the boresight.
pub fn geolocate_offset(dx: f64, dy: f64, meta: &RasterMeta) -> Result<(f64, f64)> {
    if dx == 0.0 && dy == 0.0 {
        return Ok((meta.lat0, meta.lon0));
    }
    let phi = dy.atan2(dx).to_degrees();
    let psi = (meta.heading() + phi - 90.0).to_radians();
    let dist = meta.gsd * dx.hypot(dy);
    let dlat = dist * psi.sin() / KM_PER_DEG_LAT;
    let lat = meta.lat0 + dlat;
    if lat.abs() >= 90.0 {
        return Err(Error::PolarSingularity { lat });
    }
    let dlon = dist * psi.cos() / (KM_PER_DEG_LON * lat.to_radians().cos());
    Ok((lat, wrap_180(meta.lon0 + dlon)))
}

/// Chebyshev distance in degrees with longitude wrap.
pub fn angular_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    (lat1 - lat2).abs().max(wrap_180(lon1 - lon2).abs())
}

/// Greedy nearest-first one-to-one matching of detections to truth within `match_radius` deg.
pub fn score_detections(
    dets: &[Detection],
    truth: &[FireTruth],
    match_radius: f64,
) -> Result<DetectionMetrics> {
    let pairs = match_detections(dets.iter().map(|d| (d.lat, d.lon)), truth, match_radius)?;
    let tp = pairs.len();
    Ok(DetectionMetrics::from_counts(
        tp,
        dets.len() - tp,
        truth.len() - tp,
    ))
}

/// Matched (detection index, truth index) pairs, closest first.
pub fn match_detections(
    points: impl IntoIterator<Item = (f64, f64)>,
    truth: &[FireTruth],
    match_radius: f64,
) -> Result<Vec<(usize, usize)>> {
    if !(match_radius > 0.0) {
        return Err(Error::invalid(format!(
            "match radius {match_radius} must be positive"
        )));
    }
    let points: Vec<(f64, f64)> = points.into_iter().collect();
    let mut cand = Vec::new();
    for (i, &(lat, lon)) in points.iter().enumerate() {
        for (j, f) in truth.iter().enumerate() {
            let d = angular_distance(lat, lon, f.lat, f.lon);
            if d <= match_radius {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; points.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            out.push((i, j));
        }
    }
    Ok(out)
}
