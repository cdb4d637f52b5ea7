//! Evaluation harness: the end-to-end analysis pipeline, three-fold
//! cross-validation for false-positive estimation, confidence and length
//! sweeps, and pairwise score-matrix export.

use serde::{Deserialize, Serialize};

use crate::align::{score_only, ScoringScheme};
use crate::config::PipelineConfig;
use crate::decision::{classify, wilcoxon_with, Method, Verdict};
use crate::ensemble::{BaselineMode, ReferenceModel, ReferenceStore, ScoreVector};
use crate::synth::{corpus_fingerprint, Corpus};
use crate::trace::{truncate, BootSequence, Label};
use crate::{Error, Result};

/// Line-oriented verdict record emitted by the CLI and the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub app_id: String,
    pub device_id: String,
    pub label: Label,
    pub p_value: f64,
    #[serde(rename = "I")]
    pub confidence: f64,
    pub w: f64,
    pub n_effective: usize,
    pub method: Method,
}

impl VerdictRecord {
    pub fn from_verdict(app_id: &str, device_id: &str, verdict: &Verdict) -> VerdictRecord {
        VerdictRecord {
            app_id: app_id.to_string(),
            device_id: device_id.to_string(),
            label: verdict.label,
            p_value: verdict.p_value,
            confidence: verdict.confidence,
            w: verdict.test_detail.w,
            n_effective: verdict.test_detail.n_effective,
            method: verdict.test_detail.method,
        }
    }
}

/// Full analysis of one test sequence against a prebuilt per-app model:
/// score vectors, aggregation, baseline pairing, Wilcoxon, decision.
pub fn analyze_with_model(
    test: &BootSequence,
    model: &ReferenceModel,
    config: &PipelineConfig,
) -> Result<(Verdict, ScoreVector)> {
    if test.symbols.is_empty() {
        return Err(Error::EmptyInput("test sequence".into()).in_stage("preprocess"));
    }
    let x = model
        .test_vector(test)
        .map_err(|e| e.in_stage("score"))?;
    let result = wilcoxon_with(&x.values, &model.baseline().values, config.tail, None)
        .map_err(|e| e.in_stage("wilcoxon"))?;
    let verdict = classify(&result, config.confidence).map_err(|e| e.in_stage("classify"))?;
    Ok((verdict, x))
}

/// Analyze a test sequence against the reference store for `app_id`.
pub fn analyze(
    test: &BootSequence,
    store: &ReferenceStore,
    app_id: &str,
    config: &PipelineConfig,
) -> Result<(Verdict, ScoreVector)> {
    config.validate()?;
    let refs: Vec<BootSequence> = store
        .sequences(app_id)
        .map_err(|e| e.in_stage("store"))?
        .into_iter()
        .cloned()
        .collect();
    let test = crate::trace::preprocess(test, config.max_len).map_err(|e| e.in_stage("preprocess"))?;
    let refs = truncate_all(&refs, config.max_len)?;
    let model = ReferenceModel::build(refs, &config.plan, &config.scheme, config.baseline_mode)
        .map_err(|e| e.in_stage("bag"))?;
    analyze_with_model(&test, &model, config)
}

fn truncate_all(refs: &[BootSequence], max_len: usize) -> Result<Vec<BootSequence>> {
    refs.iter()
        .map(|r| {
            Ok(BootSequence {
                symbols: truncate(&r.symbols, max_len)?,
                ..r.clone()
            })
        })
        .collect()
}

/// Three-way disjoint split of one app's legitimate samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSplit {
    pub app_id: String,
    /// Groups A, B, C as sample indices; round-robin by stable index.
    pub groups: [Vec<usize>; 3],
}

/// Split plus the false-positive estimate obtained from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub splits: Vec<AppSplit>,
    pub fpr: f64,
    pub per_app_fpr: Vec<(String, f64)>,
}

fn round_robin_split(count: usize) -> [Vec<usize>; 3] {
    let mut groups: [Vec<usize>; 3] = Default::default();
    for i in 0..count {
        groups[i % 3].push(i);
    }
    groups
}

/// Per-sample p-values for a whole corpus at one sequence length.
///
/// Malicious samples are each tested against a model over all of the
/// app's legitimate samples; legitimate samples are tested fold-wise so
/// that no sample appears in the model it is tested against.
#[derive(Debug, Clone)]
pub struct CorpusPValues {
    pub per_app: Vec<AppPValues>,
    pub splits: Vec<AppSplit>,
}

#[derive(Debug, Clone)]
pub struct AppPValues {
    pub app_id: String,
    pub legitimate: Vec<f64>,
    pub malicious: Vec<f64>,
}

/// Evaluate the corpus once at `length`, yielding p-values that any
/// threshold can then be applied to.
pub fn evaluate_pvalues(
    corpus: &Corpus,
    config: &PipelineConfig,
    length: usize,
) -> Result<CorpusPValues> {
    config.validate()?;
    if length == 0 {
        return Err(Error::ZeroMaxLen);
    }
    let mut per_app = Vec::with_capacity(corpus.apps.len());
    let mut splits = Vec::with_capacity(corpus.apps.len());
    for app in &corpus.apps {
        if app.legitimate.len() < 3 {
            return Err(Error::TooFewSamples {
                context: format!("cross-validation for {}", app.app_id),
                required: 3,
                available: app.legitimate.len(),
            });
        }
        let legit = truncate_all(&app.legitimate, length)?;
        let malicious = truncate_all(&app.malicious, length)?;

        // Malicious samples: reference model over every legitimate sample.
        let full_model = ReferenceModel::build(
            legit.clone(),
            &config.plan,
            &config.scheme,
            config.baseline_mode,
        )?;
        let mut p_mal = Vec::with_capacity(malicious.len());
        for sample in &malicious {
            let (verdict, _) = analyze_with_model(sample, &full_model, config)?;
            p_mal.push(verdict.p_value);
        }

        // Legitimate samples: each group tested against the model built
        // from the other two groups.
        let groups = round_robin_split(legit.len());
        let mut p_legit = vec![0.0f64; legit.len()];
        for tested in 0..3 {
            let train: Vec<BootSequence> = (0..3)
                .filter(|g| *g != tested)
                .flat_map(|g| groups[g].iter().map(|&i| legit[i].clone()))
                .collect();
            let model = ReferenceModel::build(
                train,
                &config.plan,
                &config.scheme,
                config.baseline_mode,
            )?;
            for &i in &groups[tested] {
                let (verdict, _) = analyze_with_model(&legit[i], &model, config)?;
                p_legit[i] = verdict.p_value;
            }
        }
        splits.push(AppSplit {
            app_id: app.app_id.clone(),
            groups,
        });
        per_app.push(AppPValues {
            app_id: app.app_id.clone(),
            legitimate: p_legit,
            malicious: p_mal,
        });
    }
    Ok(CorpusPValues { per_app, splits })
}

fn rate_below(pvalues: &[f64], threshold: f64) -> f64 {
    if pvalues.is_empty() {
        return 0.0;
    }
    pvalues.iter().filter(|p| **p < threshold).count() as f64 / pvalues.len() as f64
}

/// Cross-validation over legitimate samples only; the FPR estimate at the
/// configured confidence interval.
pub fn cross_validate(corpus: &Corpus, config: &PipelineConfig) -> Result<CrossValidationReport> {
    let pvalues = evaluate_pvalues(corpus, config, config.max_len)?;
    let mut all = Vec::new();
    let mut per_app_fpr = Vec::new();
    for app in &pvalues.per_app {
        per_app_fpr.push((app.app_id.clone(), rate_below(&app.legitimate, config.confidence)));
        all.extend_from_slice(&app.legitimate);
    }
    Ok(CrossValidationReport {
        splits: pvalues.splits,
        fpr: rate_below(&all, config.confidence),
        per_app_fpr,
    })
}

/// Per-app detection rates for one swept parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRates {
    pub app_id: String,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub parameter: f64,
    /// Sample-weighted rates over the whole corpus.
    pub tpr: f64,
    pub fpr: f64,
    /// Best / average / worst per-app rates.
    pub tpr_max: f64,
    pub tpr_avg: f64,
    pub tpr_min: f64,
    pub fpr_max: f64,
    pub fpr_avg: f64,
    pub fpr_min: f64,
    pub per_app: Vec<AppRates>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub parameter_name: String,
    pub corpus_fingerprint: u64,
    /// Full configuration echo, for reproducibility.
    pub config: PipelineConfig,
    pub rows: Vec<EvaluationRow>,
}

impl EvaluationReport {
    /// CSV rendering: one row per swept value plus per-app columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# corpus_fingerprint={:016x}\n", self.corpus_fingerprint));
        out.push_str(&format!(
            "{},tpr,fpr,tpr_max,tpr_avg,tpr_min,fpr_max,fpr_avg,fpr_min",
            self.parameter_name
        ));
        if let Some(row) = self.rows.first() {
            for app in &row.per_app {
                out.push_str(&format!(",{}_tpr,{}_fpr", app.app_id, app.app_id));
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                row.parameter,
                row.tpr,
                row.fpr,
                row.tpr_max,
                row.tpr_avg,
                row.tpr_min,
                row.fpr_max,
                row.fpr_avg,
                row.fpr_min
            ));
            for app in &row.per_app {
                out.push_str(&format!(",{},{}", app.tpr, app.fpr));
            }
            out.push('\n');
        }
        out
    }
}

fn row_from_pvalues(pvalues: &CorpusPValues, parameter: f64, threshold: f64) -> EvaluationRow {
    let mut per_app = Vec::with_capacity(pvalues.per_app.len());
    let mut all_mal = Vec::new();
    let mut all_legit = Vec::new();
    for app in &pvalues.per_app {
        per_app.push(AppRates {
            app_id: app.app_id.clone(),
            tpr: rate_below(&app.malicious, threshold),
            fpr: rate_below(&app.legitimate, threshold),
        });
        all_mal.extend_from_slice(&app.malicious);
        all_legit.extend_from_slice(&app.legitimate);
    }
    let tprs: Vec<f64> = per_app.iter().map(|a| a.tpr).collect();
    let fprs: Vec<f64> = per_app.iter().map(|a| a.fpr).collect();
    let agg = |v: &[f64]| -> (f64, f64, f64) {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let avg = v.iter().sum::<f64>() / v.len() as f64;
        (max, avg, min)
    };
    let (tpr_max, tpr_avg, tpr_min) = agg(&tprs);
    let (fpr_max, fpr_avg, fpr_min) = agg(&fprs);
    EvaluationRow {
        parameter,
        tpr: rate_below(&all_mal, threshold),
        fpr: rate_below(&all_legit, threshold),
        tpr_max,
        tpr_avg,
        tpr_min,
        fpr_max,
        fpr_avg,
        fpr_min,
        per_app,
    }
}

/// Default confidence sweep grid; spans the evaluated range plus the
/// looser regime above it.
pub fn default_confidence_grid() -> Vec<f64> {
    vec![
        0.03, 0.01, 0.002, 0.001, 2e-4, 4e-5, 8e-6, 2e-6, 4e-7,
    ]
}

/// Default length sweep grid.
pub fn default_length_grid() -> Vec<usize> {
    vec![50, 250, 500, 750, 1000, 1500, 2000, 2500]
}

/// TPR/FPR as a function of the confidence interval at a fixed length.
pub fn sweep_confidence(
    corpus: &Corpus,
    i_values: &[f64],
    length: usize,
    config: &PipelineConfig,
) -> Result<EvaluationReport> {
    if i_values.is_empty() {
        return Err(Error::EmptyInput("confidence grid".into()));
    }
    for &i in i_values {
        if !(i > 0.0 && i < 1.0) {
            return Err(Error::InvalidConfidence(i));
        }
    }
    let pvalues = evaluate_pvalues(corpus, config, length)?;
    let rows = i_values
        .iter()
        .map(|&i| row_from_pvalues(&pvalues, i, i))
        .collect();
    Ok(EvaluationReport {
        parameter_name: "confidence".into(),
        corpus_fingerprint: corpus_fingerprint(corpus),
        config: config.clone(),
        rows,
    })
}

/// TPR/FPR as a function of the analyzed sequence length.
pub fn sweep_length(
    corpus: &Corpus,
    lengths: &[usize],
    config: &PipelineConfig,
) -> Result<EvaluationReport> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput("length grid".into()));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        if len == 0 {
            return Err(Error::ZeroMaxLen);
        }
        let pvalues = evaluate_pvalues(corpus, config, len)?;
        rows.push(row_from_pvalues(&pvalues, len as f64, config.confidence));
    }
    Ok(EvaluationReport {
        parameter_name: "length".into(),
        corpus_fingerprint: corpus_fingerprint(corpus),
        config: config.clone(),
        rows,
    })
}

/// Pairwise alignment-score matrix over a sample set, as CSV.
pub fn export_score_matrix(samples: &[BootSequence], scheme: &ScoringScheme) -> Result<String> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            context: "score matrix".into(),
            required: 2,
            available: samples.len(),
        });
    }
    let ids: Vec<String> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}:{}:{}", s.app_id, s.device_id, i))
        .collect();
    let mut out = String::new();
    out.push_str(&format!(",{}\n", ids.join(",")));
    for (i, test) in samples.iter().enumerate() {
        out.push_str(&ids[i]);
        for reference in samples {
            out.push(',');
            out.push_str(&score_only(test, reference, scheme)?.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Convenience used by tests: build a model over an app's legitimate
/// samples at a given length.
pub fn app_model(
    legit: &[BootSequence],
    config: &PipelineConfig,
    length: usize,
    baseline_mode: BaselineMode,
) -> Result<ReferenceModel> {
    let refs = truncate_all(legit, length)?;
    ReferenceModel::build(refs, &config.plan, &config.scheme, baseline_mode)
}
