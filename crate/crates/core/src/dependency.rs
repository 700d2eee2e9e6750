//! Adapts-to dependency graphs between aspects, intertwined-dependency
//! conflict detection, profile distance and nearest-exemplar grouping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::profile::{Category, SystemProfile};
use crate::taxonomy::{AspectId, AutonomyLevel, Viewpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DependencyMode {
    /// Low autonomy: function follows what the structure and resources make available.
    AvailabilityDriven,
    /// High autonomy: structure and resources adapt to what the goal requires.
    RequirementsDriven,
}

/// How viewpoint-level edges become aspect-level edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExpansionPolicy {
    /// Every aspect of the dependent viewpoint gets an edge to every aspect of the other.
    #[default]
    AllPairs,
    /// Only the explicitly named aspect edges.
    NamedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Aspect(AspectId),
    /// The user-prompted goal. Carries no levels.
    Goal,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Aspect(a) => write!(f, "{a}"),
            Node::Goal => f.write_str("Goal"),
        }
    }
}

/// Viewpoint pairs (dependent, dependency) in requirements-driven mode.
const VIEWPOINT_EDGES: [(Viewpoint, Viewpoint); 6] = {
    use Viewpoint::*;
    [
        (MultiAgentCollaboration, GoalDrivenTaskManagement),
        (AgentComposition, GoalDrivenTaskManagement),
        (ContextInteraction, GoalDrivenTaskManagement),
        (AgentComposition, MultiAgentCollaboration),
        (ContextInteraction, MultiAgentCollaboration),
        (ContextInteraction, AgentComposition),
    ]
};

const NAMED_EDGES: [(Node, Node); 3] = [
    (Node::Aspect(AspectId::Decom), Node::Goal),
    (Node::Aspect(AspectId::ActM), Node::Aspect(AspectId::CommP)),
    (Node::Aspect(AspectId::Util), Node::Aspect(AspectId::Integ)),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub mode: DependencyMode,
    pub nodes: BTreeSet<Node>,
    /// Directed (dependent, dependency) pairs.
    pub edges: BTreeSet<(Node, Node)>,
}

impl DependencyGraph {
    pub fn contains(&self, from: Node, to: Node) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<Node>> {
        let mut indegree: BTreeMap<Node, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to)? += 1;
        }
        let mut ready: Vec<Node> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for (_, to) in self.edges.iter().filter(|(from, _)| *from == n) {
                let d = indegree.get_mut(to)?;
                *d -= 1;
                if *d == 0 {
                    ready.push(*to);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

pub fn dependency_graph(mode: DependencyMode) -> DependencyGraph {
    dependency_graph_with(mode, ExpansionPolicy::default())
}

pub fn dependency_graph_with(mode: DependencyMode, policy: ExpansionPolicy) -> DependencyGraph {
    let mut edges = BTreeSet::new();
    if policy == ExpansionPolicy::AllPairs {
        for (dependent, dependency) in VIEWPOINT_EDGES {
            for a in dependent.aspects() {
                for b in dependency.aspects() {
                    edges.insert((Node::Aspect(a), Node::Aspect(b)));
                }
            }
        }
    }
    edges.extend(NAMED_EDGES);
    if mode == DependencyMode::AvailabilityDriven {
        edges = edges.into_iter().map(|(a, b)| (b, a)).collect();
    }
    let nodes = AspectId::ALL.iter().map(|&a| Node::Aspect(a)).chain([Node::Goal]).collect();
    DependencyGraph { mode, nodes, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    High,
}

/// A requirements-driven edge whose dependent aspect runs at higher autonomy
/// than the aspect it relies on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub dependent: AspectId,
    pub dependency: AspectId,
    pub dependent_autonomy: AutonomyLevel,
    pub dependency_autonomy: AutonomyLevel,
    pub severity: Severity,
    pub explanation: String,
}

pub fn detect_conflicts(profile: &SystemProfile) -> Vec<Conflict> {
    detect_conflicts_in(profile, &dependency_graph(DependencyMode::RequirementsDriven))
}

pub fn detect_conflicts_in(profile: &SystemProfile, graph: &DependencyGraph) -> Vec<Conflict> {
    let mut out: Vec<Conflict> = graph
        .edges
        .iter()
        .filter_map(|&(from, to)| match (from, to) {
            (Node::Aspect(x), Node::Aspect(y)) => Some((x, y)),
            _ => None,
        })
        .filter_map(|(x, y)| {
            let (ax, ay) = (profile.autonomy(x), profile.autonomy(y));
            if ax <= ay {
                return None;
            }
            let severity = if ax.ordinal() - ay.ordinal() == 2 { Severity::High } else { Severity::Warning };
            Some(Conflict {
                dependent: x,
                dependency: y,
                dependent_autonomy: ax,
                dependency_autonomy: ay,
                severity,
                explanation: format!(
                    "{} ({}) adapts to {} ({}); the lower level may not provide what the higher one presumes",
                    x.title(),
                    ax,
                    y.title(),
                    ay
                ),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then(a.dependent.cmp(&b.dependent))
            .then(a.dependency.cmp(&b.dependency))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileDistance {
    pub total: u32,
    /// Signed (autonomy, alignment) differences, a minus b.
    pub per_aspect: BTreeMap<AspectId, (i8, i8)>,
}

/// L1 distance over the 24 level ordinals.
pub fn compare(a: &SystemProfile, b: &SystemProfile) -> ProfileDistance {
    let per_aspect: BTreeMap<AspectId, (i8, i8)> = AspectId::ALL
        .iter()
        .map(|&asp| {
            let (ca, cb) = (a.config(asp), b.config(asp));
            let au = ca.autonomy.ordinal() as i8 - cb.autonomy.ordinal() as i8;
            let al = ca.alignment.ordinal() as i8 - cb.alignment.ordinal() as i8;
            (asp, (au, al))
        })
        .collect();
    let total = per_aspect
        .values()
        .map(|(au, al)| au.unsigned_abs() as u32 + al.unsigned_abs() as u32)
        .sum();
    ProfileDistance { total, per_aspect }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupAssignment {
    pub category: Category,
    pub distance: u32,
    pub nearest_name: String,
    /// Other exemplars at the same minimal distance, if any.
    pub tied_with: Vec<String>,
}

impl GroupAssignment {
    pub fn tie(&self) -> bool {
        !self.tied_with.is_empty()
    }
}

/// Category of the closest labeled exemplar; ties go to the lexicographically smallest name.
pub fn nearest_group(
    profile: &SystemProfile,
    exemplars: &[SystemProfile],
) -> Result<GroupAssignment, AnalysisError> {
    if exemplars.is_empty() {
        return Err(AnalysisError::EmptyExemplarSet);
    }
    if let Some(e) = exemplars.iter().find(|e| e.category == Category::Unlabeled) {
        return Err(AnalysisError::UnlabeledExemplar(e.name.clone()));
    }
    let mut scored: Vec<(u32, &SystemProfile)> =
        exemplars.iter().map(|e| (compare(profile, e).total, e)).collect();
    scored.sort_by(|(da, a), (db, b)| da.cmp(db).then_with(|| a.name.cmp(&b.name)));
    let (best, winner) = scored[0];
    let tied_with = scored[1..]
        .iter()
        .take_while(|(d, _)| *d == best)
        .map(|(_, e)| e.name.clone())
        .collect();
    Ok(GroupAssignment {
        category: winner.category,
        distance: best,
        nearest_name: winner.name.clone(),
        tied_with,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{builtin, builtin_profiles};
    use crate::taxonomy::{AlignmentLevel, AspectConfig};

    fn aspect(a: AspectId) -> Node {
        Node::Aspect(a)
    }

    #[test]
    fn requirement_edges() {
        let g = dependency_graph(DependencyMode::RequirementsDriven);
        assert!(g.contains(aspect(AspectId::Util), aspect(AspectId::Integ)));
        assert!(g.contains(aspect(AspectId::ActM), aspect(AspectId::CommP)));
        assert!(g.contains(aspect(AspectId::Decom), Node::Goal));
        assert!(g.contains(aspect(AspectId::MemU), aspect(AspectId::Orch)));
        assert!(!g.contains(aspect(AspectId::Orch), aspect(AspectId::MemU)));
        // 3*3 + 4*3 + 2*3 + 4*3 + 2*3 + 2*4 + 3 named
        assert_eq!(g.edges.len(), 9 + 12 + 6 + 12 + 6 + 8 + 3);
    }

    #[test]
    fn availability_is_reversal() {
        let req = dependency_graph(DependencyMode::RequirementsDriven);
        let avail = dependency_graph(DependencyMode::AvailabilityDriven);
        let reversed: BTreeSet<_> = req.edges.iter().map(|&(a, b)| (b, a)).collect();
        assert_eq!(reversed, avail.edges);
        for g in Viewpoint::GoalDrivenTaskManagement.aspects() {
            for c in Viewpoint::ContextInteraction.aspects() {
                assert!(avail.contains(aspect(g), aspect(c)));
            }
        }
    }

    #[test]
    fn graphs_are_acyclic_without_self_edges() {
        for mode in [DependencyMode::RequirementsDriven, DependencyMode::AvailabilityDriven] {
            for policy in [ExpansionPolicy::AllPairs, ExpansionPolicy::NamedOnly] {
                let g = dependency_graph_with(mode, policy);
                assert!(g.topological_order().is_some());
                assert!(g.edges.iter().all(|(a, b)| a != b));
            }
        }
        assert_eq!(dependency_graph_with(DependencyMode::RequirementsDriven, ExpansionPolicy::NamedOnly).edges.len(), 3);
    }

    #[test]
    fn dead_end_profile_flags_util_integ() {
        use AutonomyLevel::*;
        let p = SystemProfile::uniform("x", AspectConfig::new(Static, AlignmentLevel::Integrated))
            .with_aspect(AspectId::Decom, SelfOrganizing, AlignmentLevel::Integrated)
            .with_aspect(AspectId::ActM, SelfOrganizing, AlignmentLevel::Integrated)
            .with_aspect(AspectId::CommP, SelfOrganizing, AlignmentLevel::Integrated)
            .with_aspect(AspectId::Util, SelfOrganizing, AlignmentLevel::Integrated);
        let conflicts = detect_conflicts(&p);
        assert!(conflicts.iter().any(|c| c.dependent == AspectId::Util
            && c.dependency == AspectId::Integ
            && c.severity == Severity::High));
        assert!(conflicts.windows(2).all(|w| w[0].severity >= w[1].severity));
    }

    #[test]
    fn uniform_profiles_have_no_conflicts() {
        for au in AutonomyLevel::ALL {
            let p = SystemProfile::uniform("u", AspectConfig::new(au, AlignmentLevel::Integrated));
            assert!(detect_conflicts(&p).is_empty());
        }
    }

    #[test]
    fn distances() {
        let a = builtin("Auto-GPT").unwrap();
        let b = builtin("BabyAGI").unwrap();
        assert_eq!(compare(&a, &b).total, 0);
        assert_eq!(compare(&a, &a).total, 0);
        let z = builtin("Zapier").unwrap();
        let d = compare(&a, &z);
        assert_eq!(d.per_aspect[&AspectId::Decom], (1, -1));
        assert_eq!(compare(&z, &a).total, d.total);
    }

    #[test]
    fn nearest_group_cases() {
        let all = builtin_profiles();
        let auto = all[0].clone();
        let rest: Vec<_> = all[1..].to_vec();
        let g = nearest_group(&auto, &rest).unwrap();
        assert_eq!((g.category, g.distance, g.nearest_name.as_str()), (Category::GeneralPurpose, 0, "BabyAGI"));

        let mut labeled = auto.clone();
        labeled.category = Category::RoleAgent;
        let g = nearest_group(&auto, &[labeled]).unwrap();
        assert_eq!((g.category, g.distance), (Category::RoleAgent, 0));

        assert_eq!(nearest_group(&auto, &[]), Err(AnalysisError::EmptyExemplarSet));
        let unl = SystemProfile::uniform("u", auto.config(AspectId::Orch));
        assert!(matches!(nearest_group(&auto, &[unl]), Err(AnalysisError::UnlabeledExemplar(_))));
    }

    #[test]
    fn ties_recorded_and_broken_by_name() {
        let base = SystemProfile::uniform("q", AspectConfig::from_ordinals(1, 1).unwrap());
        let mut b = SystemProfile::uniform("b", AspectConfig::from_ordinals(1, 1).unwrap());
        b.category = Category::RoleAgent;
        let mut a = b.clone();
        a.name = "a".into();
        a.category = Category::GeneralPurpose;
        let g = nearest_group(&base, &[b.clone(), a.clone()]).unwrap();
        assert_eq!(g.nearest_name, "a");
        assert_eq!(g.tied_with, vec!["b".to_string()]);
        assert!(g.tie());
    }
}
