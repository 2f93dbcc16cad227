use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Column names, in file order.
pub const CSV_COLUMNS: [&str; 13] = [
    "wall_clock_s",
    "learner_step",
    "actor_episodes",
    "critic_loss",
    "policy_objective",
    "mean_r_imitate",
    "mean_r_task",
    "eval_norm_task_return_train",
    "eval_norm_task_return_valid",
    "eval_imitation_return_train",
    "eval_imitation_return_valid",
    "stack_success_rate",
    "learner",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerKind {
    Imitation,
    Task,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Imitation => "imitation",
            Self::Task => "task",
        }
    }
}

/// One periodic report from one learner. Unavailable values are written as empty cells.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub wall_clock_s: f64,
    pub learner_step: u64,
    pub actor_episodes: u64,
    pub critic_loss: f64,
    pub policy_objective: f64,
    pub mean_r_imitate: Option<f64>,
    pub mean_r_task: Option<f64>,
    pub eval_norm_task_return_train: Option<f64>,
    pub eval_norm_task_return_valid: Option<f64>,
    pub eval_imitation_return_train: Option<f64>,
    pub eval_imitation_return_valid: Option<f64>,
    pub stack_success_rate: Option<f64>,
    pub learner: LearnerKind,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        [
            self.wall_clock_s.to_string(),
            self.learner_step.to_string(),
            self.actor_episodes.to_string(),
            self.critic_loss.to_string(),
            self.policy_objective.to_string(),
            cell(self.mean_r_imitate),
            cell(self.mean_r_task),
            cell(self.eval_norm_task_return_train),
            cell(self.eval_norm_task_return_valid),
            cell(self.eval_imitation_return_train),
            cell(self.eval_imitation_return_valid),
            cell(self.stack_success_rate),
            self.learner.name().to_string(),
        ]
        .join(",")
    }
}

/// Append-only CSV file, flushed after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &MetricsRow) -> std::io::Result<()> {
        writeln!(self.out, "{}", row.to_csv())?;
        self.out.flush()
    }
}

/// Parses a metrics file back into header and rows of optional values; the learner
/// column is returned separately.
pub fn read_metrics(path: &Path) -> std::io::Result<Vec<(Vec<Option<f64>>, String)>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let mut lines = text.lines();
    if lines.next() != Some(CSV_COLUMNS.join(",").as_str()) {
        return Err(bad("unexpected header".into()));
    }
    lines
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != CSV_COLUMNS.len() {
                return Err(bad(format!("row has {} cells", cells.len())));
            }
            let values = cells[..cells.len() - 1]
                .iter()
                .map(|c| if c.is_empty() { Ok(None) } else { c.parse().map(Some).map_err(|_| bad(format!("bad number {c}"))) })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((values, cells[cells.len() - 1].to_string()))
        })
        .collect()
}
