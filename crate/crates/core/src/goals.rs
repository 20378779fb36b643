//! Goal estimation: expert retrieval by velocity soft-DTW followed by k-means
//! over the retrieved, start-normalized endpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::softdtw::{soft_dtw, SoftDtwParams};
use crate::types::{normalize_start, velocity_profile, Position2, Trajectory, Velocity2};

/// Independent k-means++ restarts; the lowest within-cluster sum of squares wins.
const KMEANS_RESTARTS: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GoalConfig {
    /// Expert repository capacity.
    pub n_experts: usize,
    /// Number of goal candidates.
    pub k: usize,
    pub softdtw: SoftDtwParams,
    pub seed: u64,
    pub kmeans_max_iters: usize,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            n_experts: 100,
            k: 20,
            softdtw: SoftDtwParams::default(),
            seed: 0,
            kmeans_max_iters: 100,
        }
    }
}

impl GoalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_experts == 0 {
            return Err(Error::Config("n_experts must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Config("kmeans_max_iters must be at least 1".into()));
        }
        self.softdtw.validate()
    }
}

/// Training trajectories with their velocity profiles computed once.
#[derive(Debug, Clone, Default)]
pub struct ExpertPool {
    trajectories: Vec<Trajectory>,
    velocities: Vec<Vec<Velocity2>>,
}

impl ExpertPool {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let velocities = trajectories
            .iter()
            .map(velocity_profile)
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpertPool {
            trajectories,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepositoryEntry {
    /// Start-normalized copy of the pool trajectory.
    pub trajectory: Trajectory,
    pub distance: f64,
    pub pool_index: usize,
}

/// The pool trajectories closest to a query, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRepository {
    pub entries: Vec<RepositoryEntry>,
    pub capacity: usize,
}

impl ExpertRepository {
    pub fn endpoints(&self) -> Vec<Position2> {
        self.entries.iter().map(|e| e.trajectory.last()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalCandidates {
    /// Candidate endpoints in world coordinates.
    pub centers: Vec<Position2>,
}

impl GoalCandidates {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

pub fn build_repository(
    query_obs: &Trajectory,
    pool: &[Trajectory],
    n: usize,
    params: &SoftDtwParams,
) -> Result<ExpertRepository> {
    build_repository_from_pool(query_obs, &ExpertPool::new(pool.to_vec())?, n, params)
}

/// Rank pool trajectories by soft-DTW between the query's observed velocities
/// and the same-length velocity prefix of each candidate.
pub fn build_repository_from_pool(
    query_obs: &Trajectory,
    pool: &ExpertPool,
    n: usize,
    params: &SoftDtwParams,
) -> Result<ExpertRepository> {
    if pool.is_empty() {
        return Err(Error::EmptyRepository);
    }
    let query = velocity_profile(query_obs)?;
    let steps = query.len();
    if let Some((idx, _)) = pool
        .velocities
        .iter()
        .enumerate()
        .find(|(_, v)| v.len() < steps)
    {
        return Err(Error::InvalidTrajectory(format!(
            "pool trajectory {idx} is shorter than the query"
        )));
    }
    let distances = pool
        .velocities
        .par_iter()
        .map(|v| soft_dtw(&query, &v[..steps], params))
        .collect::<Result<Vec<f64>>>()?;

    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    order.truncate(n);
    let entries = order
        .into_iter()
        .map(|i| RepositoryEntry {
            trajectory: normalize_start(&pool.trajectories[i]),
            distance: distances[i],
            pool_index: i,
        })
        .collect();
    Ok(ExpertRepository {
        entries,
        capacity: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Position2>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd iteration of the kept run.
    pub wcss_history: Vec<f64>,
}

impl KMeansFit {
    pub fn wcss(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(0.0)
    }
}

pub fn kmeans(points: &[Position2], k: usize, seed: u64, max_iters: usize) -> Result<Vec<Position2>> {
    Ok(kmeans_fit(points, k, seed, max_iters)?.centers)
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// When `k` is at least the number of distinct points, the distinct points are
/// returned (in first-seen order) and padded by repeating them cyclically.
pub fn kmeans_fit(points: &[Position2], k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    if points.is_empty() {
        return Err(Error::invalid("k-means on an empty point set"));
    }
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    let mut distinct: Vec<Position2> = Vec::new();
    for &p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if k >= distinct.len() {
        let centers: Vec<Position2> = (0..k).map(|i| distinct[i % distinct.len()]).collect();
        let assignments = points.iter().map(|p| nearest(p, &centers).0).collect();
        return Ok(KMeansFit {
            centers,
            assignments,
            wcss_history: vec![0.0],
        });
    }

    let mut best: Option<KMeansFit> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let fit = lloyd(points, plus_plus_init(points, k, &mut rng), max_iters);
        if best.as_ref().is_none_or(|b| fit.wcss() < b.wcss()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &Position2, b: &Position2) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

/// Index of and squared distance to the nearest center; ties go to the lower index.
fn nearest(p: &Position2, centers: &[Position2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Position2], k: usize, rng: &mut ChaCha8Rng) -> Vec<Position2> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        // k < distinct points, so some point is still at positive distance
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
    }
    centers
}

fn lloyd(points: &[Position2], mut centers: Vec<Position2>, max_iters: usize) -> KMeansFit {
    let k = centers.len();
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    let mut wcss_history = Vec::new();
    for _ in 0..max_iters {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, &a) in points.iter().zip(&assignments) {
            sums[a].0 += p.x;
            sums[a].1 += p.y;
            sums[a].2 += 1;
        }
        for (c, &(sx, sy, n)) in centers.iter_mut().zip(&sums) {
            // an empty cluster keeps its previous center
            if n > 0 {
                *c = Position2::new(sx / n as f64, sy / n as f64);
            }
        }
        let next: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centers)).collect();
        wcss_history.push(next.iter().map(|&(_, d)| d).sum());
        let next: Vec<usize> = next.into_iter().map(|(a, _)| a).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    KMeansFit {
        centers,
        assignments,
        wcss_history,
    }
}

/// Goal candidates for one observed pedestrian, in world coordinates.
pub fn estimate_goals(
    query_obs: &Trajectory,
    pool: &ExpertPool,
    cfg: &GoalConfig,
) -> Result<GoalCandidates> {
    let repo = build_repository_from_pool(query_obs, pool, cfg.n_experts, &cfg.softdtw)?;
    let centers = kmeans(&repo.endpoints(), cfg.k, cfg.seed, cfg.kmeans_max_iters)?;
    let origin = query_obs.first();
    Ok(GoalCandidates {
        centers: centers
            .into_iter()
            .map(|c| Position2::new(c.x + origin.x, c.y + origin.y))
            .collect(),
    })
}

/// The candidate nearest the ground-truth endpoint; ties go to the lower index.
pub fn select_oracle_goal(candidates: &GoalCandidates, gt_endpoint: Position2) -> Result<Position2> {
    let mut best: Option<(f64, Position2)> = None;
    for &c in &candidates.centers {
        let d = c.distance(gt_endpoint);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::invalid("no goal candidates to select from"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line(id: i64, start: (f64, f64), step: (f64, f64), n: usize) -> Trajectory {
        let positions = (0..n)
            .map(|t| Position2::new(start.0 + step.0 * t as f64, start.1 + step.1 * t as f64))
            .collect();
        Trajectory::new(id, 0, positions).unwrap()
    }

    fn wcss(points: &[Position2], centers: &[Position2]) -> f64 {
        points.iter().map(|p| nearest(p, centers).1).sum()
    }

    /// Best within-cluster sum of squares over all 2-partitions.
    fn best_two_partition(points: &[Position2]) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut total = 0.0;
            for side in [true, false] {
                let members: Vec<&Position2> = points
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (mask >> i & 1 == 1) == side)
                    .map(|(_, p)| p)
                    .collect();
                let m = members.len() as f64;
                let cx = members.iter().map(|p| p.x).sum::<f64>() / m;
                let cy = members.iter().map(|p| p.y).sum::<f64>() / m;
                total += members.iter().map(|p| sq_dist(p, &Position2::new(cx, cy))).sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn exact_copy_ranks_first() {
        let query = line(0, (5.0, 5.0), (0.3, 0.1), 8);
        let pool = vec![
            line(1, (0.0, 0.0), (-0.3, 0.0), 20),
            line(2, (9.0, 1.0), (0.3, 0.1), 20),
            line(3, (0.0, 0.0), (0.0, 0.5), 20),
        ];
        let repo = build_repository(&query, &pool, 100, &SoftDtwParams::default()).unwrap();
        assert_eq!(repo.entries.len(), 3);
        assert_eq!(repo.entries[0].pool_index, 1);
        assert!(repo.entries.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert!(repo.entries.iter().all(|e| e.trajectory.first() == Position2::ORIGIN));
    }

    #[test]
    fn ranking_matches_exhaustive_dtw_at_zero_gamma() {
        // distances by hand: every candidate is a constant-velocity walk, so
        // exact DTW between constant sequences is 7 * |v_query - v_candidate|
        let query = line(0, (0.0, 0.0), (1.0, 0.0), 8);
        let pool = vec![
            line(1, (0.0, 0.0), (0.0, 1.0), 20),
            line(2, (0.0, 0.0), (1.5, 0.0), 20),
            line(3, (0.0, 0.0), (1.0, 0.2), 20),
        ];
        let repo = build_repository(&query, &pool, 2, &SoftDtwParams::with_gamma(0.0)).unwrap();
        let order: Vec<usize> = repo.entries.iter().map(|e| e.pool_index).collect();
        assert_eq!(order, vec![2, 1]);
        assert_relative_eq!(repo.entries[0].distance, 7.0 * 0.2, epsilon = 1e-12);
        assert_relative_eq!(repo.entries[1].distance, 7.0 * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ties_broken_by_pool_index() {
        let query = line(0, (0.0, 0.0), (1.0, 0.0), 8);
        let pool = vec![line(1, (3.0, 0.0), (1.0, 0.0), 20), line(2, (-3.0, 0.0), (1.0, 0.0), 20)];
        let repo = build_repository(&query, &pool, 10, &SoftDtwParams::default()).unwrap();
        assert_eq!(repo.entries[0].pool_index, 0);
        assert_eq!(repo.entries[1].pool_index, 1);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let query = line(0, (0.0, 0.0), (1.0, 0.0), 8);
        let err = build_repository(&query, &[], 10, &SoftDtwParams::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyRepository));
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = vec![Position2::new(0., 0.), Position2::new(2., 0.), Position2::new(1., 3.)];
        let c = kmeans(&pts, 1, 7, 100).unwrap();
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c[0].y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kmeans_k_equals_n_returns_points() {
        let pts = vec![Position2::new(0., 0.), Position2::new(5., 1.), Position2::new(-2., 4.)];
        let mut c = kmeans(&pts, 3, 1, 100).unwrap();
        c.sort_by(|a, b| a.x.total_cmp(&b.x));
        let mut expected = pts.clone();
        expected.sort_by(|a, b| a.x.total_cmp(&b.x));
        assert_eq!(c, expected);
    }

    #[test]
    fn kmeans_pads_when_k_exceeds_distinct_points() {
        let pts = vec![Position2::new(1., 1.), Position2::new(1., 1.), Position2::new(2., 2.)];
        let c = kmeans(&pts, 5, 0, 100).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|p| pts.contains(p)));
    }

    #[test]
    fn kmeans_unit_square_matches_exhaustive_partition() {
        let pts = vec![
            Position2::new(0., 0.),
            Position2::new(1., 0.),
            Position2::new(0., 1.),
            Position2::new(1., 1.),
        ];
        for seed in 0..20 {
            let c = kmeans(&pts, 2, seed, 100).unwrap();
            assert_relative_eq!(wcss(&pts, &c), best_two_partition(&pts), epsilon = 1e-12);
        }
        assert!(kmeans(&[], 2, 0, 100).is_err());
        assert!(kmeans(&pts, 0, 0, 100).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let pts: Vec<Position2> = (0..40)
            .map(|i| Position2::new((i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.71).cos() * 2.0))
            .collect();
        assert_eq!(kmeans(&pts, 5, 11, 100).unwrap(), kmeans(&pts, 5, 11, 100).unwrap());
    }

    #[test]
    fn estimate_goals_identical_lines() {
        let query = line(0, (10.0, -4.0), (0.5, 0.0), 8);
        let pool: Vec<Trajectory> = (0..30).map(|i| line(i, (i as f64, 2.0), (0.5, 0.0), 20)).collect();
        let cfg = GoalConfig {
            k: 4,
            ..Default::default()
        };
        let goals = estimate_goals(&query, &ExpertPool::new(pool).unwrap(), &cfg).unwrap();
        assert_eq!(goals.len(), 4);
        for c in &goals.centers {
            assert_relative_eq!(c.x, 10.0 + 9.5, epsilon = 1e-12);
            assert_relative_eq!(c.y, -4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_goals_matches_manual_composition() {
        let query = line(0, (1.0, 1.0), (0.2, 0.1), 8);
        let pool: Vec<Trajectory> = (0..12)
            .map(|i| line(i, (i as f64, 0.0), (0.1 + 0.02 * i as f64, 0.05 * (i % 3) as f64), 20))
            .collect();
        let cfg = GoalConfig {
            n_experts: 6,
            k: 3,
            seed: 5,
            ..Default::default()
        };
        let goals = estimate_goals(&query, &ExpertPool::new(pool.clone()).unwrap(), &cfg).unwrap();

        let repo = build_repository(&query, &pool, 6, &cfg.softdtw).unwrap();
        let centers = kmeans(&repo.endpoints(), 3, 5, 100).unwrap();
        let manual: Vec<Position2> = centers.iter().map(|c| Position2::new(c.x + 1.0, c.y + 1.0)).collect();
        assert_eq!(goals.centers, manual);

        let one = GoalConfig { k: 1, ..cfg };
        let single = estimate_goals(&query, &ExpertPool::new(pool).unwrap(), &one).unwrap();
        let ends = repo.endpoints();
        let mx = ends.iter().map(|p| p.x).sum::<f64>() / ends.len() as f64;
        let my = ends.iter().map(|p| p.y).sum::<f64>() / ends.len() as f64;
        assert_relative_eq!(single.centers[0].x, 1.0 + mx, epsilon = 1e-12);
        assert_relative_eq!(single.centers[0].y, 1.0 + my, epsilon = 1e-12);
    }

    #[test]
    fn oracle_goal_examples() {
        let cands = GoalCandidates {
            centers: vec![Position2::new(0., 0.), Position2::new(10., 10.)],
        };
        assert_eq!(select_oracle_goal(&cands, Position2::new(1., 1.)).unwrap(), Position2::new(0., 0.));
        assert_eq!(select_oracle_goal(&cands, Position2::new(10., 10.)).unwrap(), Position2::new(10., 10.));
        let tie = GoalCandidates {
            centers: vec![Position2::new(-1., 0.), Position2::new(1., 0.)],
        };
        assert_eq!(select_oracle_goal(&tie, Position2::ORIGIN).unwrap(), Position2::new(-1., 0.));
        assert!(select_oracle_goal(&GoalCandidates { centers: vec![] }, Position2::ORIGIN).is_err());
    }

    fn point_set() -> impl Strategy<Value = Vec<Position2>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..30)
            .prop_map(|v| v.into_iter().map(|(x, y)| Position2::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn lloyd_never_increases_wcss(pts in point_set(), k in 1usize..6, seed in 0u64..1000) {
            let fit = kmeans_fit(&pts, k, seed, 100).unwrap();
            for w in fit.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }

        #[test]
        fn oracle_goal_matches_linear_scan(cands in point_set(), gx in -5.0..5.0f64, gy in -5.0..5.0f64) {
            let gt = Position2::new(gx, gy);
            let picked = select_oracle_goal(&GoalCandidates { centers: cands.clone() }, gt).unwrap();
            prop_assert!(cands.contains(&picked));
            let best = cands.iter().map(|c| c.distance(gt)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(picked.distance(gt), best);
        }

        #[test]
        fn estimate_goals_translation_equivariant(dx in -20i32..20, dy in -20i32..20, seed in 0u64..50) {
            // dyadic coordinates and integer shifts keep every subtraction exact
            let (dx, dy) = (dx as f64, dy as f64);
            let query = line(0, (0.5, 0.5), (0.25, -0.125), 8);
            let pool: Vec<Trajectory> = (0..15)
                .map(|i| line(i, (i as f64 * 0.5, -(i as f64)), (0.125 * (i % 4) as f64, 0.0625 * (i % 5) as f64 - 0.125), 20))
                .collect();
            let cfg = GoalConfig { n_experts: 10, k: 3, seed, ..Default::default() };
            let base = estimate_goals(&query, &ExpertPool::new(pool.clone()).unwrap(), &cfg).unwrap();
            let shift = Velocity2::new(dx, dy);
            let moved_pool: Vec<Trajectory> = pool.iter().map(|t| t.translate(shift)).collect();
            let moved = estimate_goals(&query.translate(shift), &ExpertPool::new(moved_pool).unwrap(), &cfg).unwrap();
            for (a, b) in base.centers.iter().zip(&moved.centers) {
                prop_assert!((a.x + dx - b.x).abs() < 1e-9 && (a.y + dy - b.y).abs() < 1e-9);
            }
        }
    }
}
