use super::{GeometryError, Point2, Result};

/// Greedy farthest-point sampling.
///
/// Starts from `seed_index` and repeatedly adds the point whose minimum
/// distance to the selected set is largest. Ties go to the lowest index.
/// Comparisons use squared distances, which order identically to distances.
pub fn farthest_point_sample(points: &[Point2], k: usize, seed_index: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(GeometryError::InvalidInput("empty point list".into()));
    }
    if k == 0 || k > points.len() {
        return Err(GeometryError::InvalidInput(format!(
            "cannot select {k} of {} points",
            points.len()
        )));
    }
    if seed_index >= points.len() {
        return Err(GeometryError::InvalidInput(format!(
            "seed index {seed_index} out of range for {} points",
            points.len()
        )));
    }
    if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::InvalidInput(format!(
            "point {bad} has non-finite coordinates"
        )));
    }

    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; points.len()];
    let mut min_dist: Vec<f64> = points
        .iter()
        .map(|p| p.distance_squared(&points[seed_index]))
        .collect();
    selected.push(seed_index);
    taken[seed_index] = true;

    while selected.len() < k {
        let mut best: Option<usize> = None;
        for (i, d) in min_dist.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if *d <= min_dist[b] => {}
                _ => best = Some(i),
            }
        }
        // k <= len guarantees an unselected point remains
        let next = best.expect("unselected point available");
        taken[next] = true;
        selected.push(next);
        let anchor = points[next];
        for (i, p) in points.iter().enumerate() {
            let d = p.distance_squared(&anchor);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(selected)
}
