//! Compiling, planning and running a script over a facts archive.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datalog::{EvalError, EvalStats, Evaluation};
use crate::facts::{escape_str, FactsArchive, Manifest, Relation, Tuple, Value};
use crate::godel::{compile, CompileError, CompiledQuery};
use crate::planner::{lower_to_plan, ExecutionPlan, PlanExecution};
use crate::Language;

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("script targets {script} facts but the archive holds {archive} facts")]
    LanguageMismatch { script: Language, archive: Language },
}

/// One output relation, with column names from the output function's
/// parameters and rows in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "rows_serde")]
    pub rows: Vec<Tuple>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutput {
    pub tables: Vec<ResultTable>,
}

impl QueryOutput {
    pub fn row_count(&self) -> usize {
        self.tables.iter().map(|t| t.rows.len()).sum()
    }

    /// Tab-separated rows of every output in order, without headers.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            for row in &t.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) => i.to_string(),
                        Value::Str(s) => escape_str(s),
                    })
                    .collect();
                out.push_str(&cells.join("\t"));
                out.push('\n');
            }
        }
        out
    }

    /// A JSON array of row objects keyed by column name. With several
    /// outputs, an object mapping each output name to its array.
    pub fn to_json(&self) -> String {
        let table = |t: &ResultTable| {
            let rows: Vec<serde_json::Value> = t
                .rows
                .iter()
                .map(|r| {
                    let obj: serde_json::Map<String, serde_json::Value> =
                        t.columns.iter().cloned().zip(r.iter().map(json_value)).collect();
                    serde_json::Value::Object(obj)
                })
                .collect();
            serde_json::Value::Array(rows)
        };
        let v = match self.tables.as_slice() {
            [one] => table(one),
            many => serde_json::Value::Object(many.iter().map(|t| (t.name.clone(), table(t))).collect()),
        };
        let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
        s.push('\n');
        s
    }
}

fn json_value(v: &Value) -> serde_json::Value {
    match v {
        Value::Int(i) => json!(i),
        Value::Str(s) => json!(&**s),
    }
}

mod rows_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::facts::{Tuple, Value};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Cell {
        I(i64),
        S(String),
    }

    pub fn serialize<S: Serializer>(rows: &[Tuple], s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| match v {
                        Value::Int(i) => Cell::I(*i),
                        Value::Str(x) => Cell::S(x.to_string()),
                    })
                    .collect()
            })
            .collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Tuple>, D::Error> {
        let cells = Vec::<Vec<Cell>>::deserialize(d)?;
        Ok(cells
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| match c {
                        Cell::I(i) => Value::Int(i),
                        Cell::S(s) => Value::str(s),
                    })
                    .collect()
            })
            .collect())
    }
}

/// A compiled script with its execution plan.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub compiled: CompiledQuery,
    pub plan: ExecutionPlan,
}

impl PreparedQuery {
    /// Compiles `source` for `language`. Manifest statistics, when given,
    /// steer join ordering.
    pub fn new(source: &str, language: Language, stats: Option<&Manifest>) -> Result<Self, QueryError> {
        let compiled = compile(source, language, true)?;
        let plan = lower_to_plan(compiled.program(), stats)?;
        Ok(PreparedQuery { compiled, plan })
    }

    /// Stored relations the pruned plan reads.
    pub fn inputs(&self) -> BTreeSet<String> {
        self.plan.edb_inputs()
    }

    pub fn check_language(&self, archive: &FactsArchive) -> Result<(), QueryError> {
        if archive.language() != self.compiled.language {
            return Err(QueryError::LanguageMismatch { script: self.compiled.language, archive: archive.language() });
        }
        Ok(())
    }

    /// The plan's inputs taken from `archive`.
    pub fn edb(&self, archive: &FactsArchive) -> BTreeMap<String, Relation> {
        self.inputs().into_iter().filter_map(|n| archive.relation(&n).map(|r| (n, r.clone()))).collect()
    }

    /// Starts a stage-by-stage execution over `edb`.
    pub fn start<'p>(&'p self, edb: &BTreeMap<String, Relation>) -> PlanExecution<'p> {
        PlanExecution::new(&self.plan, edb)
    }

    pub fn collect(&self, eval: &Evaluation) -> QueryOutput {
        let tables = self
            .compiled
            .outputs()
            .into_iter()
            .map(|(name, columns)| {
                let rows = eval.relations.get(&name).map(|r| r.iter().cloned().collect()).unwrap_or_default();
                ResultTable { name, columns, rows }
            })
            .collect();
        QueryOutput { tables }
    }

    /// Runs the whole plan over `archive`.
    pub fn execute(&self, archive: &FactsArchive) -> Result<(QueryOutput, EvalStats), QueryError> {
        self.check_language(archive)?;
        let edb = self.edb(archive);
        let mut run = self.start(&edb);
        run.run_while(|_| true)?;
        let eval = run.finish()?;
        Ok((self.collect(&eval), eval.stats))
    }
}

/// Compiles and runs `source` against `archive` in one step.
pub fn run_query(source: &str, archive: &FactsArchive) -> Result<QueryOutput, QueryError> {
    let q = PreparedQuery::new(source, archive.language(), Some(archive.manifest()))?;
    Ok(q.execute(archive)?.0)
}
