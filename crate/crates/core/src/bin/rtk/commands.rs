use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use rtk_core::alignment::{aggregate_attention, extract_segments, AffinityMatrix, AttentionTensor, SegmentPair};
use rtk_core::analyzer::Analyzer;
use rtk_core::eval::{self, compare_reports, EffectivenessMetric, FidelityMetric, MetricReport};
use rtk_core::index::{build_index, read_corpus, CorpusFormat, CorpusIndex};
use rtk_core::probes::{self, ChartKind, GridRow, PostfixRow};
use rtk_core::scoring::{
    rank_all, CandidateMode, ExternalTextScores, LexicalScorer, ScorerKind, ScoringModel, TextScorer,
};
use rtk_core::thesaurus::{self, filter_scored_pairs, read_scored_pairs, Thesaurus};
use rtk_core::training_data::{
    emit_phase2, item_rng, ltog_thesaurus, phase1_record, read_alignment_queries, read_phase1_inputs, read_triplets,
};
use rtk_core::trec::{read_queries_file, Qrels, ScoredRun};

use crate::config::Config;
use crate::{
    AlignCmd, Command, EvalCmd, IndexBuildArgs, IndexCmd, ModelArgs, ProbeCmd, ProbeScorerArgs, SearchArgs,
    ThesaurusCmd, TraindataCmd, UsageError,
};

pub fn dispatch(command: Command, mut cfg: Config) -> Result<()> {
    match command {
        Command::Index(IndexCmd::Build(args)) => index_build(args, cfg),
        Command::Index(IndexCmd::Stats { index }) => index_stats(index, cfg),
        Command::Search(args) => {
            apply_model(&mut cfg, &args.model);
            search(args, cfg)
        }
        Command::Thesaurus(cmd) => thesaurus_cmd(cmd, cfg),
        Command::Align(cmd) => align_cmd(cmd, cfg),
        Command::Traindata(cmd) => traindata_cmd(cmd, cfg),
        Command::Eval(cmd) => eval_cmd(cmd, cfg),
        Command::Probe(cmd) => probe_cmd(cmd, cfg),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn open_in(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn write_header(w: &mut dyn Write, cfg: &Config) -> Result<()> {
    writeln!(w, "# config: {}", cfg.header_json())?;
    Ok(())
}

fn write_jsonl<T: Serialize>(w: &mut dyn Write, items: impl IntoIterator<Item = T>) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, &item)?;
        writeln!(w)?;
    }
    Ok(())
}

fn apply_model(cfg: &mut Config, m: &ModelArgs) {
    if let Some(k1) = m.k1 {
        cfg.bm25.k1 = k1;
    }
    if let Some(b) = m.b {
        cfg.bm25.b = b;
    }
    if let Some(mu) = m.mu {
        cfg.ql.mu = mu;
    }
    if m.qlt_normalize {
        cfg.qlt.normalize = true;
    }
    if m.index.is_some() {
        cfg.paths.index = m.index.clone();
    }
    if m.thesaurus.is_some() {
        cfg.paths.thesaurus = m.thesaurus.clone();
    }
}

fn infer_format(path: &Path, format: Option<CorpusFormat>) -> CorpusFormat {
    format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("txt") => CorpusFormat::Tsv,
        _ => CorpusFormat::Jsonl,
    })
}

fn load_index(path: &Path) -> Result<CorpusIndex> {
    CorpusIndex::load(path).with_context(|| format!("loading index {}", path.display()))
}

fn load_thesaurus(path: &Path) -> Result<Thesaurus> {
    Thesaurus::load(path).with_context(|| format!("loading thesaurus {}", path.display()))
}

fn index_build(args: IndexBuildArgs, mut cfg: Config) -> Result<()> {
    if args.no_stem {
        cfg.analyzer.stem = false;
    }
    if args.stopwords.is_some() {
        cfg.analyzer.stopwords = args.stopwords.clone();
    }
    if args.no_stopwords {
        cfg.analyzer.no_stopwords = true;
    }
    cfg.validate()?;
    cfg.echo();
    let format = infer_format(&args.corpus, args.format);
    let docs = read_corpus(&args.corpus, format).with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let index = build_index(docs, cfg.analyzer.build()?)?;
    index.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("indexed {} documents, {} terms", index.num_docs(), index.num_terms());
    Ok(())
}

fn index_stats(index: Option<PathBuf>, cfg: Config) -> Result<()> {
    let index = load_index(&cfg.require_index(index.as_ref())?)?;
    let stats = serde_json::json!({
        "num_docs": index.num_docs(),
        "num_terms": index.num_terms(),
        "total_tokens": index.total_tokens(),
        "avgdl": index.avgdl(),
        "analyzer": index.analyzer_config(),
    });
    let mut w = open_out(None)?;
    serde_json::to_writer_pretty(&mut w, &stats)?;
    writeln!(w)?;
    Ok(())
}

fn scoring_model<'a>(kind: ScorerKind, thesaurus: Option<&'a Thesaurus>, cfg: &Config) -> Result<ScoringModel<'a>> {
    let need = || usage(format!("--thesaurus is required for the {kind} scorer"));
    Ok(match kind {
        ScorerKind::Bm25 => ScoringModel::Bm25(cfg.bm25),
        ScorerKind::Bm25t => ScoringModel::Bm25T(cfg.bm25, thesaurus.ok_or_else(need)?),
        ScorerKind::Ql => ScoringModel::Ql(cfg.ql),
        ScorerKind::Qlt => ScoringModel::Qlt(cfg.ql, thesaurus.ok_or_else(need)?, cfg.qlt),
    })
}

fn search(args: SearchArgs, cfg: Config) -> Result<()> {
    cfg.validate()?;
    let index_path = cfg.require_index(None)?;
    let thesaurus_path = cfg.thesaurus_path(None);
    if args.scorer.uses_thesaurus() && thesaurus_path.is_none() {
        return Err(usage(format!("--thesaurus is required for the {} scorer", args.scorer)));
    }
    cfg.echo();
    let index = load_index(&index_path)?;
    let thesaurus = match (args.scorer.uses_thesaurus(), &thesaurus_path) {
        (true, Some(p)) => Some(load_thesaurus(p)?),
        _ => None,
    };
    let scorer = LexicalScorer::new(&index, scoring_model(args.scorer, thesaurus.as_ref(), &cfg)?)?;
    let queries = read_queries_file(&args.queries).with_context(|| format!("reading {}", args.queries.display()))?;
    let mode = if args.full_scan {
        CandidateMode::FullScan
    } else {
        CandidateMode::Postings
    };

    let run = match &args.candidates {
        None => rank_all(&scorer, &queries, args.k, mode),
        Some(path) => {
            let cand = ScoredRun::load(path).with_context(|| format!("reading {}", path.display()))?;
            let reranked: Vec<(String, Vec<rtk_core::trec::RankedDoc>)> = queries
                .par_iter()
                .map(|q| {
                    let ids: Vec<&str> = cand
                        .get(&q.qid)
                        .unwrap_or(&[])
                        .iter()
                        .take(args.depth)
                        .map(|d| d.doc_id.as_str())
                        .collect();
                    let mut docs = scorer.rerank(q, &ids)?;
                    docs.truncate(args.k);
                    Ok((q.qid.clone(), docs))
                })
                .collect::<rtk_core::Result<_>>()?;
            let mut run = ScoredRun::new();
            for (qid, docs) in reranked {
                run.insert(qid, docs)?;
            }
            run
        }
    };
    let tag = args.tag.clone().unwrap_or_else(|| args.scorer.to_string());
    let mut w = open_out(args.out.as_deref())?;
    run.write(&mut w, &tag)?;
    w.flush()?;
    Ok(())
}

fn thesaurus_cmd(cmd: ThesaurusCmd, mut cfg: Config) -> Result<()> {
    match cmd {
        ThesaurusCmd::Filter {
            scores,
            min_score,
            index,
            out,
        } => {
            if let Some(m) = min_score {
                cfg.candidates.min_score = m;
            }
            cfg.validate()?;
            cfg.echo();
            let source = name(&scores);
            let rows = read_scored_pairs(open_in(&scores)?, &source)
                .map(|r| r.map(|(_, qt, dt, s)| (qt, dt, s)))
                .collect::<rtk_core::Result<Vec<_>>>()?;
            let mut th = filter_scored_pairs(rows, &cfg.candidates)?;
            if let Some(p) = index.or(cfg.paths.index.clone()) {
                th = th.normalized(load_index(&p)?.analyzer());
            }
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            th.write(&mut w)?;
            w.flush()?;
        }
        ThesaurusCmd::Candidates {
            index,
            n_query_terms,
            n_doc_terms,
            out,
        } => {
            if let Some(n) = n_query_terms {
                cfg.candidates.n_query_terms = n;
            }
            if let Some(n) = n_doc_terms {
                cfg.candidates.n_doc_terms = n;
            }
            cfg.validate()?;
            cfg.echo();
            let index = load_index(&cfg.require_index(index.as_ref())?)?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            for (qt, dt) in thesaurus::candidate_pairs(&index, &cfg.candidates)? {
                writeln!(w, "{qt}\t{dt}")?;
            }
            w.flush()?;
        }
        ThesaurusCmd::Top { index, thesaurus, k, out } => {
            cfg.echo();
            let index = load_index(&cfg.require_index(index.as_ref())?)?;
            let th_path = cfg
                .thesaurus_path(thesaurus.as_ref())
                .ok_or_else(|| usage("missing required flag --thesaurus"))?;
            let th = load_thesaurus(&th_path)?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            writeln!(w, "qt\tdt\tscore\tweight")?;
            for e in thesaurus::top_entries(&index, &th, k) {
                writeln!(w, "{}\t{}\t{}\t{}", e.entry.qt, e.entry.dt, e.entry.score, e.weight)?;
            }
            w.flush()?;
        }
        ThesaurusCmd::Ltog {
            alignments,
            min_count,
            out,
        } => {
            cfg.echo();
            let queries = read_alignment_queries(open_in(&alignments)?, &name(&alignments))?;
            let th = ltog_thesaurus(queries, min_count)?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            th.write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn read_tensors(path: &Path) -> Result<Vec<AttentionTensor>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    AttentionTensor::read_all(&bytes).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct AlignRecord {
    file: String,
    record: usize,
    query_words: usize,
    doc_words: usize,
    segments: SegmentPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    affinity: Option<AffinityMatrix>,
}

fn align_cmd(cmd: AlignCmd, cfg: Config) -> Result<()> {
    let AlignCmd::Extract {
        attn,
        reduce,
        affinity,
        out,
    } = cmd;
    cfg.echo();
    let mut items = Vec::new();
    for path in &attn {
        for (i, t) in read_tensors(path)?.into_iter().enumerate() {
            items.push((name(path), i, t));
        }
    }
    let records = items
        .par_iter()
        .enumerate()
        .map(|(n, (file, i, t))| {
            let mut rng = item_rng(cfg.seed, n as u64);
            let segments = extract_segments(t, reduce, &mut rng)
                .with_context(|| format!("{file} record {}", i + 1))?;
            Ok(AlignRecord {
                file: file.clone(),
                record: *i,
                query_words: t.num_query_words(),
                doc_words: t.num_doc_words(),
                segments,
                affinity: affinity.then(|| aggregate_attention(t)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = open_out(out.as_deref())?;
    write_jsonl(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn traindata_cmd(cmd: TraindataCmd, cfg: Config) -> Result<()> {
    match cmd {
        TraindataCmd::Phase1 {
            inputs,
            teacher,
            reduce,
            out,
        } => {
            cfg.echo();
            let rows = read_phase1_inputs(open_in(&inputs)?, &name(&inputs))?;
            let teacher = ScoredRun::load(&teacher).with_context(|| format!("reading {}", teacher.display()))?;
            let base = inputs.parent().map(Path::to_path_buf).unwrap_or_default();
            let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            let records = rows
                .par_iter()
                .enumerate()
                .map(|(i, row)| {
                    let first = |p: &Path| -> Result<AttentionTensor> {
                        read_tensors(&resolve(p))?
                            .into_iter()
                            .next()
                            .with_context(|| format!("{} holds no attention record", p.display()))
                    };
                    let pos = first(&row.attn_pos)?;
                    let neg = first(&row.attn_neg)?;
                    let mut rng = item_rng(cfg.seed, i as u64);
                    phase1_record(row, &pos, &neg, &teacher, reduce, &mut rng)
                        .with_context(|| format!("{} line {}", inputs.display(), i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut w = open_out(out.as_deref())?;
            write_jsonl(&mut w, records)?;
            w.flush()?;
        }
        TraindataCmd::Phase2 {
            index,
            corpus,
            format,
            triplets,
            thesaurus,
            out,
        } => {
            let th_path = cfg
                .thesaurus_path(thesaurus.as_ref())
                .ok_or_else(|| usage("missing required flag --thesaurus"))?;
            cfg.echo();
            let analyzer = match index.or(cfg.paths.index.clone()) {
                Some(p) => load_index(&p)?.analyzer().clone(),
                None => Analyzer::new(cfg.analyzer.build()?)?,
            };
            let th = load_thesaurus(&th_path)?;
            let docs: HashMap<String, String> = read_corpus(&corpus, infer_format(&corpus, format))
                .with_context(|| format!("reading corpus {}", corpus.display()))?
                .into_iter()
                .map(|d| (d.doc_id, d.text))
                .collect();
            let triplets = read_triplets(open_in(&triplets)?, &name(&triplets))?;
            let batch = emit_phase2(&analyzer, &th, &docs, &triplets, cfg.seed)?;
            log::info!("{} records, {} triplets skipped", batch.records.len(), batch.skipped);
            let mut w = open_out(out.as_deref())?;
            write_jsonl(&mut w, &batch.records)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_report(w: &mut dyn Write, report: &MetricReport, per_query: bool) -> Result<()> {
    if per_query {
        for (q, v) in &report.per_query {
            writeln!(w, "{}\t{q}\t{v}", report.metric)?;
        }
    }
    writeln!(w, "{}\tall\t{}", report.metric, report.mean)?;
    writeln!(w, "{}\tnum_q\t{}", report.metric, report.per_query.len())?;
    for (q, reason) in &report.skipped {
        writeln!(w, "# {} skipped {q}: {reason}", report.metric)?;
    }
    for (q, reason) in &report.flagged {
        writeln!(w, "# {} flagged {q}: {reason}", report.metric)?;
    }
    Ok(())
}

fn load_run(path: &Path) -> Result<ScoredRun> {
    ScoredRun::load(path).with_context(|| format!("reading run {}", path.display()))
}

fn eval_cmd(cmd: EvalCmd, cfg: Config) -> Result<()> {
    match cmd {
        EvalCmd::Effectiveness {
            run,
            qrels,
            metrics,
            baseline,
            per_query,
            out,
        } => {
            let metrics = metrics
                .iter()
                .map(|m| m.parse::<EffectivenessMetric>().map_err(|e| usage(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            cfg.echo();
            let run = load_run(&run)?;
            let qrels = Qrels::load(&qrels).with_context(|| format!("reading qrels {}", qrels.display()))?;
            let baseline = baseline.as_deref().map(load_run).transpose()?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            writeln!(w, "metric\tqid\tvalue")?;
            for m in metrics {
                let report = eval::effectiveness(&run, &qrels, m)?;
                write_report(&mut w, &report, per_query)?;
                if let Some(b) = &baseline {
                    let base = eval::effectiveness(b, &qrels, m)?;
                    let t = compare_reports(&report, &base)?;
                    writeln!(w, "{m}\tbaseline\t{}", base.mean)?;
                    writeln!(w, "{m}\tt\t{}", t.t)?;
                    writeln!(w, "{m}\tp_value\t{}", t.p_value)?;
                }
            }
            w.flush()?;
        }
        EvalCmd::Fidelity {
            run_e,
            run_b,
            metrics,
            candidates,
            depth,
            per_query,
            out,
        } => {
            let metrics = metrics
                .iter()
                .map(|m| m.parse::<FidelityMetric>().map_err(|e| usage(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            cfg.echo();
            let e = load_run(&run_e)?;
            let b = load_run(&run_b)?;
            let cand = candidates.as_deref().map(load_run).transpose()?.map(|c| c.truncated(depth));
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            writeln!(w, "metric\tqid\tvalue")?;
            for m in metrics {
                let report = eval::fidelity(&e, &b, m, cand.as_ref())?;
                write_report(&mut w, &report, per_query)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

struct ProbeModel {
    kind: String,
    index: Option<CorpusIndex>,
    thesaurus: Option<Thesaurus>,
    external: Option<ExternalTextScores>,
}

fn load_probe_model(args: &ProbeScorerArgs, cfg: &mut Config) -> Result<ProbeModel> {
    apply_model(cfg, &args.model);
    cfg.validate()?;
    let kind = args.scorer.to_ascii_lowercase();
    if kind == "external" {
        let path = args
            .scores
            .as_ref()
            .ok_or_else(|| usage("--scores is required for the external scorer"))?;
        cfg.echo();
        let external = ExternalTextScores::load(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(ProbeModel {
            kind,
            index: None,
            thesaurus: None,
            external: Some(external),
        });
    }
    let scorer_kind: ScorerKind = clap::ValueEnum::from_str(&kind, true)
        .map_err(|_| usage(format!("unknown scorer `{kind}` (bm25, bm25t, ql, qlt, external)")))?;
    let index_path = cfg.require_index(None)?;
    let th_path = cfg.thesaurus_path(None);
    if scorer_kind.uses_thesaurus() && th_path.is_none() {
        return Err(usage(format!("--thesaurus is required for the {kind} scorer")));
    }
    cfg.echo();
    Ok(ProbeModel {
        kind,
        index: Some(load_index(&index_path)?),
        thesaurus: match (scorer_kind.uses_thesaurus(), th_path) {
            (true, Some(p)) => Some(load_thesaurus(&p)?),
            _ => None,
        },
        external: None,
    })
}

fn with_scorer<T>(model: &ProbeModel, cfg: &Config, f: impl FnOnce(&dyn TextScorer) -> Result<T>) -> Result<T> {
    if let Some(ext) = &model.external {
        return f(ext);
    }
    let kind: ScorerKind = clap::ValueEnum::from_str(&model.kind, true).map_err(|e: String| usage(e))?;
    let index = model.index.as_ref().expect("index loaded for lexical scorers");
    let scorer = LexicalScorer::new(index, scoring_model(kind, model.thesaurus.as_ref(), cfg)?)?;
    f(&scorer)
}

fn write_svg(path: Option<&Path>, svg: String) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, svg).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open_in(path)?.lines() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() && !line.starts_with('#') {
            out.push(line.to_owned());
        }
    }
    Ok(out)
}

fn read_reference(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let (k, v) = line
            .split_once('\t')
            .with_context(|| format!("{}:{}: expected `value<TAB>score`", path.display(), i + 1))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| rtk_core::Error::Row {
                row: i + 1,
                message: format!("bad score `{v}` in {}", path.display()),
            })?;
        out.insert(k.to_owned(), v);
    }
    Ok(out)
}

fn probe_cmd(cmd: ProbeCmd, mut cfg: Config) -> Result<()> {
    match cmd {
        ProbeCmd::Grid {
            scorer,
            input,
            columns,
            reference,
            out,
            svg,
        } => {
            let model = load_probe_model(&scorer, &mut cfg)?;
            let rows: Vec<GridRow> = probes::read_jsonl_rows(open_in(&input)?, &name(&input))?;
            let columns = read_lines(&columns)?;
            let grid = with_scorer(&model, &cfg, |s| Ok(probes::run_replacement_grid(s, &rows, &columns)?))?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            grid.write_tsv(&mut w)?;
            if let Some(r) = reference {
                let r = probes::grid_bias_correlation(&grid, &read_reference(&r)?)?;
                writeln!(w, "# bias_correlation\t{r}")?;
            }
            w.flush()?;
            write_svg(
                svg.as_deref(),
                probes::svg_chart(ChartKind::Bar, "mean score per slot value", &grid.columns, &grid.column_means()),
            )?;
        }
        ProbeCmd::Postfix {
            scorer,
            input,
            chars,
            out,
            svg,
        } => {
            let model = load_probe_model(&scorer, &mut cfg)?;
            let rows: Vec<PostfixRow> = probes::read_jsonl_rows(open_in(&input)?, &name(&input))?;
            let chars: Vec<char> = chars.chars().collect();
            let report = with_scorer(&model, &cfg, |s| Ok(probes::run_postfix_probe(s, &rows, &chars)?))?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            report.write_tsv(&mut w)?;
            w.flush()?;
            let labels: Vec<String> = report.chars.iter().map(|c| c.ch.to_string()).collect();
            let means: Vec<f64> = report.chars.iter().map(|c| c.mean_delta).collect();
            write_svg(svg.as_deref(), probes::svg_chart(ChartKind::Bar, "mean score change per appended character", &labels, &means))?;
        }
        ProbeCmd::Years {
            scorer,
            query,
            template,
            from,
            to,
            out,
            svg,
        } => {
            if from > to {
                bail!(UsageError(format!("--from {from} is after --to {to}")));
            }
            let model = load_probe_model(&scorer, &mut cfg)?;
            let points = with_scorer(&model, &cfg, |s| Ok(probes::run_year_sweep(s, &query, &template, from..=to)?))?;
            let mut w = open_out(out.as_deref())?;
            write_header(&mut w, &cfg)?;
            probes::write_year_tsv(&mut w, &points)?;
            w.flush()?;
            let labels: Vec<String> = points.iter().map(|p| p.0.to_string()).collect();
            let values: Vec<f64> = points.iter().map(|p| p.1).collect();
            write_svg(svg.as_deref(), probes::svg_chart(ChartKind::Line, "score by year", &labels, &values))?;
        }
    }
    Ok(())
}
