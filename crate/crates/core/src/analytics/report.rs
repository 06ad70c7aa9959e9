use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{adoption_curve, sort_by_play_time, two_proportion_ztest, win_rate, AnalyticsError, Proportion, ZTest};
use crate::engine::GameLogRecord;
use crate::explain::ExplanationMode;

/// Setting A pilot summary: overall win rate, split by explanation use,
/// and adoption of explanations over the two halves of play.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub total: Proportion,
    pub used_explanations: Proportion,
    pub no_explanations: Proportion,
    pub usage_ztest: ZTest,
    /// Share of games using explanations in the first and second half.
    pub adoption: Vec<Proportion>,
    /// Second half against first half.
    pub adoption_ztest: ZTest,
}

pub fn table1_report(logs: &[GameLogRecord]) -> Result<Table1Report, AnalyticsError> {
    let total = win_rate(logs, |_| true)?;
    let used = win_rate(logs, |l| l.used_explanations())?;
    let unused = win_rate(logs, |l| !l.used_explanations())?;
    let usage_ztest = two_proportion_ztest(used.k, used.n, unused.k, unused.n)?;
    let mut ordered = logs.to_vec();
    sort_by_play_time(&mut ordered);
    let adoption = adoption_curve(&ordered, 2)?;
    let adoption_ztest = two_proportion_ztest(adoption[1].k, adoption[1].n, adoption[0].k, adoption[0].n)?;
    Ok(Table1Report {
        total,
        used_explanations: used,
        no_explanations: unused,
        usage_ztest,
        adoption,
        adoption_ztest,
    })
}

impl Table1Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("Total Plays", self.total),
            ("Expl. used at least once", self.used_explanations),
            ("No explanations used", self.no_explanations),
        ];
        let _ = writeln!(s, "{:<28} {:>6} {:>6} {:>9}", "", "Wins", "Plays", "Win %");
        for (name, p) in rows {
            let _ = writeln!(s, "{name:<28} {:>6} {:>6} {:>9.2}", p.k, p.n, p.percent().unwrap_or(f64::NAN));
        }
        let _ = writeln!(
            s,
            "used vs not used: z = {:.4}, p = {:.4}",
            self.usage_ztest.z, self.usage_ztest.p_two_tailed
        );
        for (i, p) in self.adoption.iter().enumerate() {
            let _ = writeln!(s, "adoption half {}: {p}", i + 1);
        }
        let _ = writeln!(
            s,
            "adoption second vs first half: z = {:.4}, p = {:.3e}",
            self.adoption_ztest.z, self.adoption_ztest.p_two_tailed
        );
        s
    }
}

/// Exact totals behind one Table 2 cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub n: u64,
    pub wins: u64,
    pub score_sum: u64,
}

impl Table2Cell {
    fn add(&mut self, l: &GameLogRecord) {
        self.n += 1;
        self.wins += u64::from(l.won());
        self.score_sum += u64::from(l.final_score);
    }

    fn merge(&mut self, o: &Table2Cell) {
        self.n += o.n;
        self.wins += o.wins;
        self.score_sum += o.score_sum;
    }

    /// Mean final score over all games, losses included.
    pub fn mean_score(&self) -> Option<f64> {
        (self.n > 0).then(|| self.score_sum as f64 / self.n as f64)
    }

    pub fn win_percent(&self) -> Option<f64> {
        Proportion::new(self.wins, self.n).percent()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    /// `None` for the pooled Overall row.
    pub group: Option<ExplanationMode>,
    pub with_expl: Table2Cell,
    pub no_expl: Table2Cell,
    pub baseline: Table2Cell,
    /// With Expl minus the overall baseline.
    pub improv_score: Option<f64>,
    pub improv_win_pp: Option<f64>,
}

impl Table2Row {
    pub fn label(&self) -> &'static str {
        match self.group {
            Some(ExplanationMode::Attention) => "Attention",
            Some(ExplanationMode::RelQas) => "Rel QAS",
            Some(ExplanationMode::Both) => "Both",
            Some(ExplanationMode::None) => "None",
            None => "Overall",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub rows: Vec<Table2Row>,
    pub overall_baseline: Table2Cell,
    pub score_semantics: String,
}

impl Table2Report {
    pub fn row(&self, group: Option<ExplanationMode>) -> Option<&Table2Row> {
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} | {:>15} | {:>15} | {:>15} | {:>15}",
            "Expl Type", "With Expl", "No Expl", "Group Baseline", "Overall Improv"
        );
        let _ = writeln!(
            s,
            "{:<10} | {:>6} {:>8} | {:>6} {:>8} | {:>6} {:>8} | {:>6} {:>8}",
            "", "Score", "Win %", "Score", "Win %", "Score", "Win %", "Score", "Win %"
        );
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} | {:>6} {:>8} | {:>6} {:>8} | {:>6} {:>8} | {:>6} {:>8}",
                r.label(),
                f(r.with_expl.mean_score()),
                f(r.with_expl.win_percent()),
                f(r.no_expl.mean_score()),
                f(r.no_expl.win_percent()),
                f(r.baseline.mean_score()),
                f(r.baseline.win_percent()),
                f(r.improv_score),
                f(r.improv_win_pp),
            );
        }
        let _ = writeln!(s, "score: {}", self.score_semantics);
        s
    }
}

const GROUP_ORDER: [ExplanationMode; 3] =
    [ExplanationMode::Attention, ExplanationMode::RelQas, ExplanationMode::Both];

/// Per explanation group: games with explanations, later games without,
/// and the baseline block 0. The Overall row pools the groups' games.
pub fn table2_report(logs: &[GameLogRecord]) -> Result<Table2Report, AnalyticsError> {
    let mut rows = Vec::new();
    for group in GROUP_ORDER {
        let games: Vec<&GameLogRecord> = logs.iter().filter(|l| l.group == group).collect();
        if games.is_empty() {
            continue;
        }
        let mut row = Table2Row {
            group: Some(group),
            with_expl: Table2Cell::default(),
            no_expl: Table2Cell::default(),
            baseline: Table2Cell::default(),
            improv_score: None,
            improv_win_pp: None,
        };
        for l in games {
            if l.block == 0 {
                row.baseline.add(l);
            } else if l.explanation_mode.is_none() {
                row.no_expl.add(l);
            } else {
                row.with_expl.add(l);
            }
        }
        if row.baseline.n == 0 {
            return Err(AnalyticsError::MissingBaseline(group));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AnalyticsError::EmptySelection("explanation groups".into()));
    }
    let mut overall = Table2Row {
        group: None,
        with_expl: Table2Cell::default(),
        no_expl: Table2Cell::default(),
        baseline: Table2Cell::default(),
        improv_score: None,
        improv_win_pp: None,
    };
    for r in &rows {
        overall.with_expl.merge(&r.with_expl);
        overall.no_expl.merge(&r.no_expl);
        overall.baseline.merge(&r.baseline);
    }
    rows.push(overall);
    let base = rows.last().expect("overall row").baseline;
    for r in rows.iter_mut() {
        r.improv_score = r.with_expl.mean_score().zip(base.mean_score()).map(|(a, b)| a - b);
        r.improv_win_pp = r.with_expl.win_percent().zip(base.win_percent()).map(|(a, b)| a - b);
    }
    Ok(Table2Report {
        rows,
        overall_baseline: base,
        score_semantics: "mean final score over all games in the cell (losses score 0)".into(),
    })
}
