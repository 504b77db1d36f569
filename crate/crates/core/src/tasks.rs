//! The canonical battery of eleven collider inference tasks I–XI.
//!
//! The tasks partition into four groups:
//!
//! | group                       | tasks    | queries                                  |
//! |-----------------------------|----------|------------------------------------------|
//! | predictive                  | I–III    | `p(E=1 | C1, C2)` for 0, 1, 2 causes     |
//! | independence                | IV–V     | `p(C1=1 | C2)`                           |
//! | diagnostic (effect present) | VI–VIII  | `p(C1=1 | E=1, ...)`                     |
//! | diagnostic (effect absent)  | IX–XI    | `p(C1=1 | E=0, ...)`                     |
//!
//! Task ids serialize as Roman-numeral strings `"I"…"XI"` everywhere.

use crate::error::Error;
use crate::model::{Evidence, EvidenceQuery, Variable};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

/// Identifier of a canonical inference task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum TaskId {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
}

impl TaskId {
    pub const ALL: [TaskId; 11] = [
        TaskId::I,
        TaskId::II,
        TaskId::III,
        TaskId::IV,
        TaskId::V,
        TaskId::VI,
        TaskId::VII,
        TaskId::VIII,
        TaskId::IX,
        TaskId::X,
        TaskId::XI,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::I => "I",
            TaskId::II => "II",
            TaskId::III => "III",
            TaskId::IV => "IV",
            TaskId::V => "V",
            TaskId::VI => "VI",
            TaskId::VII => "VII",
            TaskId::VIII => "VIII",
            TaskId::IX => "IX",
            TaskId::X => "X",
            TaskId::XI => "XI",
        }
    }

    /// Zero-based position in the canonical I..XI order.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|t| *t == self).unwrap()
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// The four inference types the battery spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskGroup {
    Predictive,
    Independence,
    DiagnosticEffectPresent,
    DiagnosticEffectAbsent,
}

impl TaskGroup {
    pub const ALL: [TaskGroup; 4] = [
        TaskGroup::Predictive,
        TaskGroup::Independence,
        TaskGroup::DiagnosticEffectPresent,
        TaskGroup::DiagnosticEffectAbsent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskGroup::Predictive => "predictive",
            TaskGroup::Independence => "independence",
            TaskGroup::DiagnosticEffectPresent => "diagnostic_effect_present",
            TaskGroup::DiagnosticEffectAbsent => "diagnostic_effect_absent",
        }
    }
}

impl fmt::Display for TaskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// One inference task: a conditional query plus its catalog metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub group: TaskGroup,
    pub query: EvidenceQuery,
    /// Whether a C1<->C2 mirrored instantiation of this task exists (false
    /// for tasks whose evidence is already symmetric in the causes).
    pub symmetric_variant: bool,
}

fn task(id: TaskId, group: TaskGroup, query_var: Variable, evidence: Evidence) -> TaskSpec {
    let query = EvidenceQuery::new(query_var, true, evidence).expect("catalog query is well-formed");
    let symmetric_variant = !matches!(id, TaskId::I | TaskId::III);
    TaskSpec {
        id,
        group,
        query,
        symmetric_variant,
    }
}

static CATALOG: LazyLock<[TaskSpec; 11]> = LazyLock::new(|| {
    use TaskGroup::*;
    use Variable::*;
    let e = Evidence::empty;
    [
        task(TaskId::I, Predictive, E, e().with(C1, false).with(C2, false)),
        task(TaskId::II, Predictive, E, e().with(C1, true).with(C2, false)),
        task(TaskId::III, Predictive, E, e().with(C1, true).with(C2, true)),
        task(TaskId::IV, Independence, C1, e().with(C2, false)),
        task(TaskId::V, Independence, C1, e().with(C2, true)),
        task(TaskId::VI, DiagnosticEffectPresent, C1, e().with(E, true).with(C2, true)),
        task(TaskId::VII, DiagnosticEffectPresent, C1, e().with(E, true)),
        task(TaskId::VIII, DiagnosticEffectPresent, C1, e().with(E, true).with(C2, false)),
        task(TaskId::IX, DiagnosticEffectAbsent, C1, e().with(E, false).with(C2, true)),
        task(TaskId::X, DiagnosticEffectAbsent, C1, e().with(E, false)),
        task(TaskId::XI, DiagnosticEffectAbsent, C1, e().with(E, false).with(C2, false)),
    ]
});

/// The eleven canonical tasks in order I..XI.
pub fn catalog() -> &'static [TaskSpec] {
    &*CATALOG
}

/// Look up a canonical task by id.
pub fn by_id(id: TaskId) -> &'static TaskSpec {
    &catalog()[id.index()]
}

/// The same task with the roles of C1 and C2 exchanged, or `None` for tasks
/// whose evidence is already symmetric (I and III).
///
/// Mirrored instantiations arise from counterbalancing during data
/// collection; aggregation averages a task with its counterpart.
pub fn symmetric_counterpart(task: &TaskSpec) -> Result<Option<TaskSpec>, Error> {
    let canonical = by_id(task.id);
    if task != canonical {
        return Err(Error::UnknownTask(format!(
            "{} with query {}",
            task.id, task.query
        )));
    }
    if !task.symmetric_variant {
        return Ok(None);
    }
    let swap_var = |v: Variable| match v {
        Variable::C1 => Variable::C2,
        Variable::C2 => Variable::C1,
        Variable::E => Variable::E,
    };
    let mut evidence = Evidence::empty();
    for (var, value) in task.query.evidence.observed() {
        evidence = evidence.with(swap_var(var), value);
    }
    let query = EvidenceQuery::new(swap_var(task.query.query_var), task.query.query_value, evidence)
        .expect("role swap preserves well-formedness");
    Ok(Some(TaskSpec {
        id: task.id,
        group: task.group,
        query,
        symmetric_variant: true,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_eleven_tasks_in_order() {
        let tasks = catalog();
        assert_eq!(tasks.len(), 11);
        for (i, t) in tasks.iter().enumerate() {
            assert_eq!(t.id, TaskId::ALL[i]);
        }
    }

    #[test]
    fn catalog_queries_match_definitions() {
        let x = by_id(TaskId::X);
        assert_eq!(x.query.query_var, Variable::C1);
        assert_eq!(x.query.evidence, Evidence::empty().with(Variable::E, false));

        let iv = by_id(TaskId::IV);
        assert_eq!(iv.query.query_var, Variable::C1);
        assert_eq!(iv.query.evidence, Evidence::empty().with(Variable::C2, false));

        let ii = by_id(TaskId::II);
        assert_eq!(ii.query.query_var, Variable::E);
        assert_eq!(
            ii.query.evidence,
            Evidence::empty().with(Variable::C1, true).with(Variable::C2, false)
        );
    }

    #[test]
    fn groups_partition_the_ids() {
        let groups: Vec<TaskGroup> = catalog().iter().map(|t| t.group).collect();
        assert_eq!(&groups[0..3], &[TaskGroup::Predictive; 3]);
        assert_eq!(&groups[3..5], &[TaskGroup::Independence; 2]);
        assert_eq!(&groups[5..8], &[TaskGroup::DiagnosticEffectPresent; 3]);
        assert_eq!(&groups[8..11], &[TaskGroup::DiagnosticEffectAbsent; 3]);
    }

    #[test]
    fn symmetric_counterparts() {
        let ii = symmetric_counterpart(by_id(TaskId::II)).unwrap().unwrap();
        assert_eq!(ii.query.query_var, Variable::E);
        assert_eq!(
            ii.query.evidence,
            Evidence::empty().with(Variable::C1, false).with(Variable::C2, true)
        );

        let vii = symmetric_counterpart(by_id(TaskId::VII)).unwrap().unwrap();
        assert_eq!(vii.query.query_var, Variable::C2);
        assert_eq!(vii.query.evidence, Evidence::empty().with(Variable::E, true));

        assert!(symmetric_counterpart(by_id(TaskId::I)).unwrap().is_none());
        assert!(symmetric_counterpart(by_id(TaskId::III)).unwrap().is_none());
    }

    #[test]
    fn counterpart_rejects_non_catalog_tasks() {
        let mut fake = by_id(TaskId::V).clone();
        fake.query = EvidenceQuery::new(
            Variable::C2,
            true,
            Evidence::empty().with(Variable::C1, true),
        )
        .unwrap();
        assert!(matches!(symmetric_counterpart(&fake), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn ids_round_trip_as_roman_numerals() {
        for id in TaskId::ALL {
            assert_eq!(id.as_str().parse::<TaskId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert!("XII".parse::<TaskId>().is_err());
    }
}
