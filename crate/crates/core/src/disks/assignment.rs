//! Minimum-cost assignment and the role-casting strategies built on it.

use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Column chosen for each row.
    pub columns: Vec<usize>,
    pub cost: f64,
}

struct Dual {
    columns: Vec<usize>,
    /// Column potentials; negative ones mark columns every optimum must use.
    v: Vec<f64>,
    u: Vec<f64>,
}

fn check(cost: &[Vec<f64>]) -> Result<usize> {
    let cols = cost.first().map_or(0, Vec::len);
    for (row, line) in cost.iter().enumerate() {
        if line.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: line.len(),
            });
        }
        if let Some(col) = line.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost { row, col });
        }
    }
    if cost.len() > cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            actual: cost.len(),
        });
    }
    Ok(cols)
}

/// Shortest augmenting path with potentials, `O(rows² · cols)`.
fn solve_dual(cost: &[Vec<f64>], cols: usize) -> Dual {
    let n = cost.len();
    let m = cols;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0; n];
    for j in 1..=m {
        if owner[j] > 0 {
            columns[owner[j] - 1] = j - 1;
        }
    }
    Dual {
        columns,
        v: v[1..].to_vec(),
        u: u[1..].to_vec(),
    }
}

fn total(cost: &[Vec<f64>], columns: &[usize]) -> f64 {
    columns.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Minimum total cost, without the tie-break.
pub(crate) fn min_cost(cost: &[Vec<f64>]) -> Result<f64> {
    let cols = check(cost)?;
    let dual = solve_dual(cost, cols);
    Ok(total(cost, &dual.columns))
}

/// Kuhn's augmenting paths on an adjacency list; returns matched count.
fn max_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(l: usize, adj: &[Vec<usize>], seen: &mut [bool], mate: &mut [Option<usize>]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if mate[r].is_none_or(|other| augment(other, adj, seen, mate)) {
                mate[r] = Some(l);
                return true;
            }
        }
        false
    }
    let mut mate = vec![None; right];
    let mut matched = 0;
    for l in 0..adj.len() {
        let mut seen = vec![false; right];
        if augment(l, adj, &mut seen, &mut mate) {
            matched += 1;
        }
    }
    matched
}

/// Minimum-cost assignment of every row to a distinct column. Among optimal
/// assignments the lexicographically smallest column vector wins.
///
/// Optimal assignments are exactly the matchings in the tight subgraph that
/// cover every row and every column with negative potential, so rows are
/// fixed one at a time to their smallest tight column that still admits
/// such a completion.
pub fn hungarian_solve(cost: &[Vec<f64>]) -> Result<Assignment> {
    let cols = check(cost)?;
    let n = cost.len();
    if n == 0 {
        return Ok(Assignment {
            columns: vec![],
            cost: 0.0,
        });
    }
    let dual = solve_dual(cost, cols);
    let scale = cost.iter().flatten().fold(1.0f64, |a, c| a.max(c.abs()));
    let eps = 1e-9 * scale * (n as f64);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..cols)
                .filter(|&j| cost[i][j] - dual.u[i] - dual.v[j] <= eps)
                .collect()
        })
        .collect();
    let required: Vec<bool> = dual.v.iter().map(|&v| v < -eps).collect();

    let mut columns = Vec::with_capacity(n);
    let mut fixed_cols = vec![false; cols];
    for i in 0..n {
        let choice = tight[i]
            .iter()
            .copied()
            .find(|&j| !fixed_cols[j] && completes(&tight, &required, &fixed_cols, i, j, cols));
        let j = choice.unwrap_or(dual.columns[i]);
        fixed_cols[j] = true;
        columns.push(j);
    }
    // guard against a tolerance-induced slip
    if total(cost, &columns) > total(cost, &dual.columns) + eps {
        columns = dual.columns;
    }
    let cost = total(cost, &columns);
    Ok(Assignment { columns, cost })
}

/// Whether rows after `row` can be matched in the tight graph, with `row`
/// taking `col`, covering every required column.
fn completes(tight: &[Vec<usize>], required: &[bool], fixed: &[bool], row: usize, col: usize, cols: usize) -> bool {
    let rest: Vec<Vec<usize>> = tight[row + 1..]
        .iter()
        .map(|adj| adj.iter().copied().filter(|&j| !fixed[j] && j != col).collect())
        .collect();
    if max_matching(&rest, cols) < rest.len() {
        return false;
    }
    let need: Vec<usize> = (0..cols).filter(|&j| required[j] && !fixed[j] && j != col).collect();
    if need.is_empty() {
        return true;
    }
    // columns on the left now, so the matching saturates the required ones
    let mut by_col = vec![Vec::new(); need.len()];
    for (r, adj) in rest.iter().enumerate() {
        for &j in adj {
            if let Some(k) = need.iter().position(|&q| q == j) {
                by_col[k].push(r);
            }
        }
    }
    max_matching(&by_col, rest.len()) == need.len()
}

/// Outcome of comparing two point lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Largest matched distance under the best pairing; infinite on a count
    /// mismatch.
    pub residual: f64,
}

fn pairs_within(a: &[Point], b: &[Point], limit: f64) -> bool {
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| {
            b.iter()
                .map(|q| if p.distance(*q) <= limit { 0.0 } else { 1.0 })
                .collect()
        })
        .collect();
    min_cost(&cost).is_ok_and(|c| c == 0.0)
}

/// Smallest `t` such that the lists pair up with every pair within `t`.
pub fn bottleneck_distance(a: &[Point], b: &[Point]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = a.iter().flat_map(|p| b.iter().map(move |q| p.distance(*q))).collect();
    if candidates.iter().any(|d| d.is_nan()) {
        return f64::NAN;
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // the pairing that is best per point bounds the answer from below
    let lower = a
        .iter()
        .map(|p| b.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let mut lo = candidates.partition_point(|&d| d < lower);
    let mut hi = candidates.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pairs_within(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

pub fn observation_match(desired: &[Point], actual: &[Point], epsilon: f64) -> MatchOutcome {
    let residual = bottleneck_distance(desired, actual);
    MatchOutcome {
        matched: residual <= epsilon,
        residual,
    }
}

/// Cheaper yes/no form of [`observation_match`].
pub fn lists_match(desired: &[Point], actual: &[Point], epsilon: f64) -> bool {
    if desired.len() != actual.len() {
        return false;
    }
    let near = desired.iter().all(|p| actual.iter().any(|q| p.distance(*q) <= epsilon));
    near && pairs_within(desired, actual, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Naive,
    Hungarian,
    Heuristic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Naive, Strategy::Hungarian, Strategy::Heuristic];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Hungarian => "hungarian",
            Strategy::Heuristic => "heuristic",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown strategy {s:?}")))
    }
}

/// Where the participant sits and how far it sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub participant: usize,
    pub centre: Point,
    pub sensing: f64,
    /// Parked robots wait this far beyond the sensing range.
    pub margin: f64,
    pub max_speed: f64,
}

impl Stage {
    pub fn parking_radius(&self) -> f64 {
        self.sensing + self.margin
    }

    /// Radial projection onto the parking circle.
    pub fn park(&self, at: Point) -> Point {
        let offset = at - self.centre;
        let norm = offset.norm();
        let dir = if norm > 0.0 {
            offset * (1.0 / norm)
        } else {
            Point::new(1.0, 0.0)
        };
        self.centre + dir * self.parking_radius()
    }

    fn travel(&self, from: Point, to: Point) -> f64 {
        from.distance(to) / self.max_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub role: usize,
    pub robot: usize,
    pub target: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offstage {
    pub robot: usize,
    pub target: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    /// One entry per role, in role order.
    pub onstage: Vec<RoleAssignment>,
    /// In robot order.
    pub offstage: Vec<Offstage>,
    /// Sum of straight-line travel times, in seconds.
    pub cost: f64,
}

impl AssignmentPlan {
    /// Target of every robot, `None` for the participant.
    pub fn targets(&self, robots: usize) -> Vec<Option<Point>> {
        let mut out = vec![None; robots];
        for a in &self.onstage {
            out[a.robot] = Some(a.target);
        }
        for o in &self.offstage {
            out[o.robot] = Some(o.target);
        }
        out
    }
}

/// Cast the non-participant robots at `positions` into `roles` (absolute
/// target points). Robots left over park, or under the heuristic wait at the
/// edge of the sensing disk next to the `upcoming` obstacle positions.
pub fn assign_roles(
    positions: &[Point],
    roles: &[Point],
    upcoming: &[Point],
    strategy: Strategy,
    stage: &Stage,
) -> Result<AssignmentPlan> {
    let crew: Vec<usize> = (0..positions.len()).filter(|&i| i != stage.participant).collect();
    if roles.len() > crew.len() {
        return Err(Error::InsufficientRobots {
            roles: roles.len(),
            robots: crew.len(),
        });
    }
    let (onstage, parked) = match strategy {
        Strategy::Naive => naive(roles, &crew),
        Strategy::Hungarian | Strategy::Heuristic => optimal(positions, roles, &crew, stage)?,
    };
    let offstage = if strategy == Strategy::Heuristic {
        lie_in_wait(positions, &parked, upcoming, stage)?
    } else {
        parked
            .iter()
            .map(|&robot| Offstage {
                robot,
                target: stage.park(positions[robot]),
            })
            .collect()
    };
    let cost = onstage
        .iter()
        .map(|a| stage.travel(positions[a.robot], a.target))
        .chain(offstage.iter().map(|o| stage.travel(positions[o.robot], o.target)))
        .sum();
    Ok(AssignmentPlan {
        onstage,
        offstage,
        cost,
    })
}

fn naive(roles: &[Point], crew: &[usize]) -> (Vec<RoleAssignment>, Vec<usize>) {
    let mut order: Vec<usize> = (0..roles.len()).collect();
    order.sort_by(|&a, &b| roles[a].x.total_cmp(&roles[b].x).then(a.cmp(&b)));
    let mut onstage: Vec<RoleAssignment> = order
        .iter()
        .zip(crew)
        .map(|(&role, &robot)| RoleAssignment {
            role,
            robot,
            target: roles[role],
        })
        .collect();
    onstage.sort_by_key(|a| a.role);
    (onstage, crew[roles.len()..].to_vec())
}

fn optimal(
    positions: &[Point],
    roles: &[Point],
    crew: &[usize],
    stage: &Stage,
) -> Result<(Vec<RoleAssignment>, Vec<usize>)> {
    let cost: Vec<Vec<f64>> = crew
        .iter()
        .map(|&robot| {
            let at = positions[robot];
            let park = stage.travel(at, stage.park(at));
            roles
                .iter()
                .map(|&target| stage.travel(at, target))
                .chain(std::iter::repeat_n(park, crew.len() - roles.len()))
                .collect()
        })
        .collect();
    let solution = hungarian_solve(&cost)?;
    let mut onstage = Vec::with_capacity(roles.len());
    let mut parked = Vec::new();
    for (row, &col) in solution.columns.iter().enumerate() {
        let robot = crew[row];
        if col < roles.len() {
            onstage.push(RoleAssignment {
                role: col,
                robot,
                target: roles[col],
            });
        } else {
            parked.push(robot);
        }
    }
    onstage.sort_by_key(|a| a.role);
    Ok((onstage, parked))
}

fn lie_in_wait(positions: &[Point], parked: &[usize], upcoming: &[Point], stage: &Stage) -> Result<Vec<Offstage>> {
    let spots: Vec<Point> = upcoming.iter().take(parked.len()).map(|&p| stage.park(p)).collect();
    let mut out: Vec<Offstage> = parked
        .iter()
        .map(|&robot| Offstage {
            robot,
            target: stage.park(positions[robot]),
        })
        .collect();
    if spots.is_empty() {
        return Ok(out);
    }
    // spots as rows: each gets a distinct robot
    let cost: Vec<Vec<f64>> = spots
        .iter()
        .map(|&spot| {
            parked
                .iter()
                .map(|&robot| stage.travel(positions[robot], spot))
                .collect()
        })
        .collect();
    let solution = hungarian_solve(&cost)?;
    for (spot, &col) in solution.columns.iter().enumerate() {
        out[col].target = spots[spot];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn stage() -> Stage {
        Stage {
            participant: 0,
            centre: p(0.0, 0.0),
            sensing: 0.5,
            margin: 0.05,
            max_speed: 2.0,
        }
    }

    #[test]
    fn small_oracles() {
        let a = hungarian_solve(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.columns, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
        let a = hungarian_solve(&[vec![3.5]]).unwrap();
        assert_eq!((a.columns, a.cost), (vec![0], 3.5));
        let a = hungarian_solve(&vec![vec![1.0; 3]; 3]).unwrap();
        assert_eq!(a.columns, vec![0, 1, 2]);
    }

    #[test]
    fn rectangular_ties_prefer_low_columns() {
        let a = hungarian_solve(&[vec![5.0, 1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 9.0]]).unwrap();
        assert_eq!(a.columns, vec![1, 0]);
        let a = hungarian_solve(&[vec![0.0; 4], vec![0.0; 4]]).unwrap();
        assert_eq!(a.columns, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(
            hungarian_solve(&[vec![1.0, f64::NAN]]).unwrap_err(),
            Error::NonFiniteCost { row: 0, col: 1 }
        );
        assert!(matches!(
            hungarian_solve(&[vec![1.0], vec![2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(hungarian_solve(&[]).unwrap().cost, 0.0);
    }

    #[test]
    fn list_matching() {
        let a = [p(0.0, 0.0), p(1.0, 0.0)];
        let b = [p(1.0, 0.0), p(0.0, 0.0)];
        assert_eq!(
            observation_match(&a, &b, 0.0),
            MatchOutcome {
                matched: true,
                residual: 0.0
            }
        );
        assert!(!observation_match(&a, &b[..1], 1.0).matched);
        assert_eq!(observation_match(&a, &b[..1], 1.0).residual, f64::INFINITY);
        let eps = 1e-3;
        let moved = [p(0.0, 2.0 * eps), p(1.0, 0.0)];
        let out = observation_match(&a, &moved, eps);
        assert!(!out.matched);
        assert!((out.residual - 2.0 * eps).abs() < 1e-15);
        assert!(lists_match(&a, &b, 0.0));
        assert!(!lists_match(&a, &moved, eps));
    }

    #[test]
    fn bottleneck_is_not_greedy() {
        // nearest-neighbour pairing would strand (3,0)
        let a = [p(0.0, 0.0), p(2.0, 0.0)];
        let b = [p(1.0, 0.0), p(3.0, 0.0)];
        assert_eq!(bottleneck_distance(&a, &b), 1.0);
        let b = [p(1.9, 0.0), p(5.0, 0.0)];
        assert_eq!(bottleneck_distance(&a, &b), 3.0);
    }

    #[test]
    fn forced_single_role() {
        let plan = assign_roles(
            &[p(0.0, 0.0), p(3.0, 4.0)],
            &[p(0.0, 0.0)],
            &[],
            Strategy::Hungarian,
            &stage(),
        )
        .unwrap();
        assert_eq!(
            plan.onstage,
            vec![RoleAssignment {
                role: 0,
                robot: 1,
                target: p(0.0, 0.0)
            }]
        );
        assert_eq!(plan.cost, 5.0 / 2.0);
    }

    #[test]
    fn optimal_avoids_crossing() {
        let robots = [p(9.0, 9.0), p(-1.0, 0.0), p(1.0, 0.0)];
        let roles = [p(-1.0, 1.0), p(1.0, 1.0)];
        let plan = assign_roles(&robots, &roles, &[], Strategy::Hungarian, &stage()).unwrap();
        assert_eq!(plan.cost, 2.0 * (1.0 / 2.0));
        assert!(plan.offstage.is_empty());

        let reversed = [p(9.0, 9.0), p(1.0, 0.0), p(-1.0, 0.0)];
        let naive = assign_roles(&reversed, &roles, &[], Strategy::Naive, &stage()).unwrap();
        assert!((naive.cost - 2.0 * 5f64.sqrt() / 2.0).abs() < 1e-12);
        let best = assign_roles(&reversed, &roles, &[], Strategy::Hungarian, &stage()).unwrap();
        assert_eq!(best.cost, 1.0);
    }

    #[test]
    fn too_many_roles() {
        let err = assign_roles(&[p(0.0, 0.0)], &[p(0.1, 0.0)], &[], Strategy::Naive, &stage()).unwrap_err();
        assert_eq!(err, Error::InsufficientRobots { roles: 1, robots: 0 });
    }

    #[test]
    fn spare_robots_park_outside() {
        let robots = [p(0.0, 0.0), p(0.1, 0.0), p(0.0, -0.2)];
        let plan = assign_roles(&robots, &[], &[], Strategy::Hungarian, &stage()).unwrap();
        assert_eq!(plan.offstage.len(), 2);
        assert!((plan.offstage[0].target.x - 0.55).abs() < 1e-12);
        assert!((plan.offstage[1].target.y + 0.55).abs() < 1e-12);
    }

    #[test]
    fn heuristic_waits_by_upcoming_obstacles() {
        let robots = [p(0.0, 0.0), p(0.6, 0.0), p(-0.6, 0.0)];
        let upcoming = [p(-1.0, 0.1)];
        let plan = assign_roles(&robots, &[], &upcoming, Strategy::Heuristic, &stage()).unwrap();
        let spot = stage().park(p(-1.0, 0.1));
        let waiting = plan.offstage.iter().find(|o| o.target == spot).unwrap();
        assert_eq!(waiting.robot, 2);
    }
}
