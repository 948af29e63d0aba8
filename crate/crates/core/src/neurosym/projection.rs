use serde::{Deserialize, Serialize};

use super::pool::ProgramPool;
use crate::dist::{kl_divergence, Categorical, Support};
use crate::error::{Error, Result};

/// Divergence scores closer than this are ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Predicate {
    /// Members may put mass only where the mask is true.
    SupportMask { mask: Vec<bool> },
    /// Members' probabilities are non-increasing along `order`.
    MonotoneOrder { order: Vec<usize> },
}

impl Predicate {
    pub fn admits(&self, r: &Categorical) -> Result<bool> {
        let p = r.probs();
        match self {
            Predicate::SupportMask { mask } => {
                if mask.len() != p.len() {
                    return Err(Error::SupportMismatch(format!(
                        "mask of {} for {} labels",
                        mask.len(),
                        p.len()
                    )));
                }
                Ok(p.iter().zip(mask).all(|(&x, &m)| m || x == 0.0))
            }
            Predicate::MonotoneOrder { order } => {
                if order.iter().any(|&i| i >= p.len()) {
                    return Err(Error::InvalidArgument("monotone order index out of range".into()));
                }
                Ok(order.windows(2).all(|w| p[w[0]] >= p[w[1]]))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Member {
    pub id: String,
    pub dist: Categorical,
    pub complexity_bits: f64,
}

/// A finite feasible set of distributions over one support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolicConstraintSet {
    #[serde(skip)]
    support: Support,
    members: Vec<Member>,
    predicates: Vec<Predicate>,
}

impl SymbolicConstraintSet {
    /// Keeps the members satisfying every predicate.
    pub fn new(members: Vec<Member>, predicates: Vec<Predicate>) -> Result<Self> {
        let support = members
            .first()
            .map(|m| m.dist.support().clone())
            .ok_or_else(|| Error::InvalidArgument("constraint set has no members".into()))?;
        let mut kept = Vec::new();
        for mut m in members {
            m.dist = m.dist.rebased(&support)?;
            let mut ok = true;
            for p in &predicates {
                ok &= p.admits(&m.dist)?;
            }
            if ok {
                kept.push(m);
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidArgument("no member satisfies the predicates".into()));
        }
        Ok(SymbolicConstraintSet {
            support,
            members: kept,
            predicates,
        })
    }

    /// Outputs of the pool programs with `K ≤ max_complexity`.
    pub fn from_pool(pool: &ProgramPool, max_complexity: f64, predicates: Vec<Predicate>) -> Result<Self> {
        let members = pool
            .programs()
            .iter()
            .filter(|p| p.complexity_bits <= max_complexity)
            .map(|p| Member {
                id: p.id.clone(),
                dist: p.output.clone(),
                complexity_bits: p.complexity_bits,
            })
            .collect::<Vec<_>>();
        if members.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no program has K ≤ {max_complexity} bits"
            )));
        }
        Self::new(members, predicates)
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionDirection {
    /// `argmin_R KL(R‖Q)`.
    #[default]
    MemberFirst,
    /// `argmin_R KL(Q‖R)`.
    ModelFirst,
}

/// Index of the projection of `q` and its divergence.
pub fn project_index(
    q: &Categorical,
    set: &SymbolicConstraintSet,
    direction: ProjectionDirection,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in set.members.iter().enumerate() {
        let d = match direction {
            ProjectionDirection::MemberFirst => kl_divergence(&m.dist, q)?,
            ProjectionDirection::ModelFirst => kl_divergence(q, &m.dist)?,
        };
        if !d.is_finite() {
            continue;
        }
        best = match best {
            None => Some((i, d)),
            Some((j, bd)) => {
                let better = d < bd - TIE_TOL
                    || ((d - bd).abs() <= TIE_TOL && m.complexity_bits < set.members[j].complexity_bits);
                if better {
                    Some((i, d))
                } else {
                    Some((j, bd))
                }
            }
        };
    }
    best.ok_or(Error::NoFeasibleProjection)
}

pub fn project_symbolic(
    q: &Categorical,
    set: &SymbolicConstraintSet,
    direction: ProjectionDirection,
) -> Result<Categorical> {
    let (i, _) = project_index(q, set, direction)?;
    Ok(set.members[i].dist.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(p: &[f64]) -> Categorical {
        Categorical::new(Support::range(p.len()), p.to_vec()).unwrap()
    }

    fn member(id: &str, p: &[f64], k: f64) -> Member {
        Member {
            id: id.into(),
            dist: cat(p),
            complexity_bits: k,
        }
    }

    fn set(members: Vec<Member>) -> SymbolicConstraintSet {
        SymbolicConstraintSet::new(members, vec![]).unwrap()
    }

    #[test]
    fn examples() {
        let dir = ProjectionDirection::default();
        let q = cat(&[0.4, 0.3, 0.2, 0.1]);
        let s = set(vec![
            member("u", &[0.25; 4], 3.0),
            member("pt", &[1.0, 0.0, 0.0, 0.0], 2.0),
        ]);
        // KL(U‖Q) = −2 − ¼·log₂(0.0024) ≈ 0.17; KL(δ₀‖Q) = log₂(1/0.4) ≈ 1.32.
        let ku = -2.0 - 0.25 * (0.4f64 * 0.3 * 0.2 * 0.1).log2();
        assert!((ku - kl_divergence(&cat(&[0.25; 4]), &q).unwrap()).abs() < 1e-12);
        assert!(ku < 0.4f64.recip().log2());
        assert_eq!(project_symbolic(&q, &s, dir).unwrap(), cat(&[0.25; 4]));

        let with_q = set(vec![member("u", &[0.25; 4], 3.0), member("q", q.probs(), 9.0)]);
        assert_eq!(project_symbolic(&q, &with_q, dir).unwrap(), q);
        let single = set(vec![member("pt", &[0.0, 1.0, 0.0, 0.0], 1.0)]);
        assert_eq!(project_symbolic(&q, &single, dir).unwrap().prob(1), 1.0);
    }

    #[test]
    fn ties_and_infeasible() {
        let q = cat(&[0.5, 0.5]);
        let s = set(vec![
            member("a", &[1.0, 0.0], 4.0),
            member("b", &[0.0, 1.0], 2.0),
            member("c", &[0.0, 1.0], 2.0),
        ]);
        assert_eq!(project_index(&q, &s, ProjectionDirection::MemberFirst).unwrap().0, 1);
        let holey = cat(&[1.0, 0.0]);
        let s = set(vec![member("b", &[0.0, 1.0], 2.0), member("u", &[0.5, 0.5], 1.0)]);
        assert!(matches!(
            project_symbolic(&holey, &s, ProjectionDirection::MemberFirst),
            Err(Error::NoFeasibleProjection)
        ));
        // The other direction is finite for the uniform member.
        assert_eq!(project_index(&holey, &s, ProjectionDirection::ModelFirst).unwrap().0, 1);
    }

    #[test]
    fn predicates_filter() {
        let members = vec![
            member("a", &[0.7, 0.2, 0.1], 1.0),
            member("b", &[0.1, 0.2, 0.7], 1.0),
            member("c", &[0.5, 0.5, 0.0], 1.0),
        ];
        let mono = Predicate::MonotoneOrder { order: vec![0, 1, 2] };
        let s = SymbolicConstraintSet::new(members.clone(), vec![mono]).unwrap();
        assert_eq!(
            s.members().iter().map(|m| m.id.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );
        let mask = Predicate::SupportMask {
            mask: vec![true, true, false],
        };
        let s = SymbolicConstraintSet::new(members.clone(), vec![mask]).unwrap();
        assert_eq!(s.members().len(), 1);
        let none = Predicate::SupportMask { mask: vec![false; 3] };
        assert!(SymbolicConstraintSet::new(members, vec![none]).is_err());
    }
}
