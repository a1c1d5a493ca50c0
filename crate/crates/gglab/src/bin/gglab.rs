//! Command-line front end: build artifacts, run checks, emit JSON
//! reports and CSV tables. Exit codes: 0 success, 2 verdict-false,
//! 3 truncation-only outcome, 1 error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use gglab::ball::{build_ball, CayleyBall};
use gglab::electric::{
    coarse_embedding_report, double_electrification_check, electrify, horoballify,
    EmbedOptions,
};
use gglab::error::GglabError;
use gglab::fixtures::{flat_grid, FlatGrid};
use gglab::graded::{
    graded_verdict_free, graded_verdict_geometric, roundtrip_theorem_check, GradedMode,
    GradedOptions, RoundtripInput,
};
use gglab::height::{
    algebraic_height, dyadic_delta_grid, fold_subgroups, geometric_height, GeomOptions,
};
use gglab::metric::{delta_hyperbolicity, fmt_hlen, DeltaMode, DeltaReport, HLen, MetricGraph};
use gglab::paths::{detect_meetings, MeetingParams};
use gglab::presentation::{load_subgroup_words, Presentation, Strategy};
use gglab::stallings::{coset_pieces, CoreGraph, CosetFamily};

const DEFAULT_VERTEX_BUDGET: usize = 500_000;

#[derive(Parser)]
#[command(name = "gglab", version, about = "electrified Cayley balls, horoballs, heights and graded verdicts")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for every sampling decision.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct SourceArgs {
    /// Presentation file, or a fixture config ("fixture: flat-grid").
    #[arg(long)]
    presentation: PathBuf,
    /// Subgroup generator file; repeatable.
    #[arg(long)]
    subgroup: Vec<PathBuf>,
    /// Ball radius.
    #[arg(short = 'R', long = "radius", default_value_t = 6)]
    radius: u32,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a Cayley ball and write it as a labeled-graph artifact.
    Ball {
        #[command(flatten)]
        src: SourceArgs,
    },
    /// Four-point δ of a graph artifact or a fresh ball.
    Delta {
        /// Graph artifact (JSON) to measure instead of a ball.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        presentation: Option<PathBuf>,
        #[arg(short = 'R', long = "radius", default_value_t = 6)]
        radius: u32,
        /// Force the exhaustive quadruple scan.
        #[arg(long)]
        exact: bool,
        /// Sampled-mode vertex count.
        #[arg(long, default_value_t = 48)]
        sample: usize,
    },
    /// Cone off the subgroup cosets and report the coarse embedding.
    Electrify {
        #[command(flatten)]
        src: SourceArgs,
    },
    /// Combinatorial horoballs over the cosets plus the double
    /// electrification comparison.
    Horoball {
        #[command(flatten)]
        src: SourceArgs,
        /// Horoball depth K.
        #[arg(long, default_value_t = 4)]
        depth: u32,
        /// Comparison pairs.
        #[arg(long, default_value_t = 200)]
        sample: usize,
    },
    /// Subgroup height, algebraic or geometric.
    Height {
        #[command(flatten)]
        src: SourceArgs,
        /// "algebraic" or "geometric".
        #[arg(long, default_value = "algebraic")]
        mode: String,
        /// Coset representative length bound (algebraic mode).
        #[arg(short = 'L', long = "coset-length", default_value_t = 4)]
        coset_length: usize,
        /// Tuple size cap.
        #[arg(long, default_value_t = 4)]
        depth: u32,
        /// Boundedness threshold B in whole units (geometric mode).
        #[arg(long)]
        bound: Option<u32>,
        /// Δ grid, comma-separated whole units (geometric mode).
        #[arg(long)]
        delta_grid: Option<String>,
    },
    /// Graded relative hyperbolicity verdict.
    Graded {
        #[command(flatten)]
        src: SourceArgs,
        /// "algebraic" or "geometric".
        #[arg(long, default_value = "algebraic")]
        mode: String,
        #[arg(short = 'L', long = "coset-length", default_value_t = 4)]
        coset_length: usize,
        #[arg(long)]
        bound: Option<u32>,
        #[arg(long)]
        delta_grid: Option<String>,
    },
    /// ε-meeting detection between two coset pieces.
    Meet {
        #[command(flatten)]
        src: SourceArgs,
        /// Δ in whole units.
        #[arg(long, default_value_t = 10)]
        bound: u32,
        /// ε as a fraction "num/den" in (0,1).
        #[arg(long, default_value = "1/100")]
        eps: String,
    },
    /// Both sides of the quasiconvexity ⇔ graded theorem.
    Roundtrip {
        #[command(flatten)]
        src: SourceArgs,
        /// Quasiconvexity acceptance threshold, whole units.
        #[arg(long, default_value_t = 4)]
        bound: u32,
    },
}

/// Sampling notes describe coverage, not a failure to decide; only
/// harder truncations downgrade the exit code.
fn hard_truncations(notices: &[String]) -> bool {
    notices.iter().any(|n| !n.contains("sampled"))
}

fn vertex_budget() -> usize {
    std::env::var("GGLAB_BUDGET")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_VERTEX_BUDGET)
}

fn write_artifact(out: &Path, name: &str, v: &serde_json::Value) -> gglab::Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

fn write_csv(out: &Path, name: &str, header_comment: &str, header: &str, rows: &[String]) -> gglab::Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    let mut text = String::new();
    text.push_str(header_comment);
    text.push('\n');
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

fn delta_json(d: &DeltaReport) -> serde_json::Value {
    serde_json::json!({
        "delta4": d.delta4(),
        "mode": match d.mode {
            DeltaMode::Exact => serde_json::json!("exact"),
            DeltaMode::Sampled { count, seed } =>
                serde_json::json!({"sampled": {"count": count, "seed": seed}}),
        },
        "witness": d.witness,
        "lower_bound_only": d.lower_bound_only,
    })
}

/// What a presentation path resolves to.
enum Loaded {
    Free {
        presentation: Presentation,
        ball: CayleyBall,
        graph: MetricGraph,
        subgroups: Vec<CoreGraph>,
        families: Vec<CosetFamily>,
    },
    Grid {
        cur: FlatGrid,
        prev: FlatGrid,
    },
}

fn is_fixture(path: &Path) -> gglab::Result<Option<String>> {
    let text = std::fs::read_to_string(path)?;
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if let Some(rest) = line.strip_prefix("fixture:") {
            return Ok(Some(rest.trim().to_string()));
        }
    }
    Ok(None)
}

fn load(src: &SourceArgs, verbose: u8) -> gglab::Result<Loaded> {
    match is_fixture(&src.presentation)? {
        Some(kind) if kind == "flat-grid" => {
            if verbose > 0 {
                eprintln!("fixture flat-grid at R={} (and R-2 for stability)", src.radius);
            }
            let prev_r = src.radius.saturating_sub(2).max(1);
            Ok(Loaded::Grid {
                cur: flat_grid(src.radius)?,
                prev: flat_grid(prev_r)?,
            })
        }
        Some(kind) => Err(GglabError::Config(format!("unknown fixture '{kind}'"))),
        None => {
            let presentation = Presentation::load(&src.presentation)?;
            let ball = build_ball(&presentation, src.radius, vertex_budget())?;
            if verbose > 0 {
                eprintln!("ball R={}: {} vertices", src.radius, ball.n());
            }
            let graph = ball.metric_graph();
            let mut words = Vec::new();
            for p in &src.subgroup {
                words.push(load_subgroup_words(p, &presentation.alphabet)?);
            }
            let subgroups = fold_subgroups(&presentation, &words);
            let mut families = Vec::new();
            if presentation.strategy == Strategy::FreeGroup {
                for cg in &subgroups {
                    families.push(coset_pieces(cg, &ball, None, 2)?);
                }
            }
            Ok(Loaded::Free {
                presentation,
                ball,
                graph,
                subgroups,
                families,
            })
        }
    }
}

fn need_subgroup(loaded: &Loaded) -> gglab::Result<()> {
    if let Loaded::Free { families, .. } = loaded {
        if families.is_empty() {
            return Err(GglabError::Input(
                "this command needs at least one --subgroup".into(),
            ));
        }
    }
    Ok(())
}

fn parse_grid_arg(s: &str) -> gglab::Result<Vec<u32>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| GglabError::Input(format!("bad Δ grid entry '{t}'")))
        })
        .collect()
}

fn psi_csv_rows(psi: &gglab::electric::PsiTable) -> Vec<String> {
    psi.raw
        .iter()
        .map(|(r, v)| {
            let above = psi.from_above.get(r).copied().unwrap_or(*v);
            format!("{r},{},{}", fmt_hlen(*v), fmt_hlen(above))
        })
        .collect()
}

fn run(cli: &Cli) -> gglab::Result<u8> {
    match &cli.cmd {
        Cmd::Ball { src } => {
            let loaded = load(src, cli.verbose)?;
            let v = match &loaded {
                Loaded::Free { ball, .. } => ball.to_json(),
                Loaded::Grid { cur, .. } => cur.space.to_json(),
            };
            let path = write_artifact(&cli.out, "ball.json", &v)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Cmd::Delta {
            graph,
            presentation,
            radius,
            exact,
            sample,
        } => {
            let g = match (graph, presentation) {
                (Some(p), _) => {
                    let v: serde_json::Value =
                        serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    MetricGraph::from_json(&v)?
                }
                (None, Some(p)) => {
                    let pres = Presentation::load(p)?;
                    build_ball(&pres, *radius, vertex_budget())?.metric_graph()
                }
                (None, None) => {
                    return Err(GglabError::Input(
                        "delta needs --graph or --presentation".into(),
                    ))
                }
            };
            let mode = if *exact {
                DeltaMode::Exact
            } else {
                DeltaMode::Sampled {
                    count: *sample,
                    seed: cli.seed,
                }
            };
            let rep = delta_hyperbolicity(&g, mode)?;
            let path = write_artifact(&cli.out, "delta.json", &delta_json(&rep))?;
            println!("delta4 = {} ({})", rep.delta4(), path.display());
            Ok(0)
        }
        Cmd::Electrify { src } => {
            let loaded = load(src, cli.verbose)?;
            need_subgroup(&loaded)?;
            let (graph, pieces): (&MetricGraph, Vec<Vec<u32>>) = match &loaded {
                Loaded::Free { graph, families, .. } => (
                    graph,
                    families.iter().flat_map(|f| f.pieces.clone()).collect(),
                ),
                Loaded::Grid { cur, .. } => (&cur.space, cur.rows.clone()),
            };
            let cs = electrify(graph, &pieces)?;
            write_artifact(&cli.out, "electrify.json", &cs.to_json())?;
            let mut eo = EmbedOptions::default();
            eo.seed = cli.seed;
            let rep = coarse_embedding_report(graph, &pieces, &eo)?;
            let path = write_artifact(&cli.out, "embedding.json", &rep.to_json())?;
            write_csv(
                &cli.out,
                "psi_table.csv",
                "# psi table: r = base-distance bucket (whole units); psi_raw and psi_from_above in units (.5 = half unit)",
                "r,psi_raw,psi_from_above",
                &psi_csv_rows(&rep.psi_table),
            )?;
            println!(
                "proper = {}, cobounded_max = {} ({})",
                rep.proper,
                fmt_hlen(rep.cobounded_max),
                path.display()
            );
            Ok(if rep.proper { 0 } else { 2 })
        }
        Cmd::Horoball { src, depth, sample } => {
            let loaded = load(src, cli.verbose)?;
            need_subgroup(&loaded)?;
            let (graph, pieces): (&MetricGraph, Vec<Vec<u32>>) = match &loaded {
                Loaded::Free { graph, families, .. } => (
                    graph,
                    families.iter().flat_map(|f| f.pieces.clone()).collect(),
                ),
                Loaded::Grid { cur, .. } => (&cur.space, cur.rows.clone()),
            };
            let h = horoballify(graph, &pieces, *depth, vertex_budget())?;
            write_artifact(&cli.out, "horoball.json", &h.graph.to_json())?;
            let rep = double_electrification_check(
                graph,
                &pieces,
                *depth,
                *sample,
                cli.seed,
                vertex_budget(),
            )?;
            let v = serde_json::json!({
                "lambda": rep.lambda(),
                "lambda_quarters": rep.lambda_quarters,
                "max_additive_gap": fmt_hlen(rep.max_additive_gap),
                "pairs": rep.pairs,
                "seed": rep.seed,
                "depth": rep.depth,
                "meta": rep.meta,
            });
            let path = write_artifact(&cli.out, "double_check.json", &v)?;
            println!("lambda = {} ({})", rep.lambda(), path.display());
            Ok(0)
        }
        Cmd::Height {
            src,
            mode,
            coset_length,
            depth,
            bound,
            delta_grid,
        } => {
            let loaded = load(src, cli.verbose)?;
            let (v, exhaustive) = match (&loaded, mode.as_str()) {
                (Loaded::Free { presentation, subgroups, .. }, "algebraic") => {
                    if subgroups.is_empty() {
                        return Err(GglabError::Input("height needs --subgroup".into()));
                    }
                    let rep = algebraic_height(
                        presentation,
                        subgroups,
                        *coset_length,
                        *depth as usize,
                        10_000_000,
                    )?;
                    println!("algebraic height = {}", rep.height);
                    (rep.to_json(), rep.exhaustive)
                }
                (_, "geometric") => {
                    let (graph, pieces, safe): (&MetricGraph, Vec<Vec<u32>>, u32) =
                        match &loaded {
                            Loaded::Free { graph, families, ball, .. } => {
                                need_subgroup(&loaded)?;
                                (
                                    graph,
                                    families.iter().flat_map(|f| f.pieces.clone()).collect(),
                                    ball.safe_radius,
                                )
                            }
                            Loaded::Grid { cur, .. } => {
                                (&cur.space, cur.rows.clone(), cur.radius)
                            }
                        };
                    let grid = match delta_grid {
                        Some(s) => parse_grid_arg(s)?,
                        None => dyadic_delta_grid(safe),
                    };
                    let b: HLen = bound.map(|u| 2 * u).unwrap_or(4 * (safe / 10).max(1));
                    let max_level = (*depth as usize).max(2).min(pieces.len() + 1).max(2);
                    let rep = geometric_height(
                        graph,
                        &pieces,
                        b,
                        &grid,
                        0,
                        max_level,
                        &GeomOptions::default(),
                    )?;
                    println!("geometric height = {}", rep.height);
                    (rep.to_json(Some(src.radius)), !rep.truncated)
                }
                (_, other) => {
                    return Err(GglabError::Input(format!(
                        "unknown height mode '{other}' (algebraic|geometric)"
                    )))
                }
            };
            let path = write_artifact(&cli.out, "height.json", &v)?;
            println!("wrote {}", path.display());
            Ok(if exhaustive { 0 } else { 3 })
        }
        Cmd::Graded {
            src,
            mode,
            coset_length,
            bound,
            delta_grid,
        } => {
            let loaded = load(src, cli.verbose)?;
            let mut opts = GradedOptions::default();
            opts.seed = cli.seed;
            opts.embed.seed = cli.seed;
            opts.l = *coset_length;
            opts.b = bound.map(|u| 2 * u);
            if let Some(s) = delta_grid {
                opts.grid = Some(parse_grid_arg(s)?);
            }
            let verdict = match &loaded {
                Loaded::Free {
                    presentation,
                    ball,
                    graph,
                    subgroups,
                    families,
                } => {
                    if subgroups.is_empty() {
                        return Err(GglabError::Input("graded needs --subgroup".into()));
                    }
                    match mode.as_str() {
                        "algebraic" => {
                            opts.mode = GradedMode::Algebraic;
                            graded_verdict_free(presentation, ball, &subgroups[0], &opts)?
                        }
                        "geometric" => {
                            need_subgroup(&loaded)?;
                            let pieces: Vec<Vec<u32>> = families[0].pieces.clone();
                            graded_verdict_geometric(graph, &pieces, ball.safe_radius, &opts)?
                        }
                        other => {
                            return Err(GglabError::Input(format!(
                                "unknown graded mode '{other}' (algebraic|geometric)"
                            )))
                        }
                    }
                }
                Loaded::Grid { cur, prev } => {
                    // Cross-radius stability: the fixture's height must
                    // agree between R−2 and R to count as finite.
                    opts.max_level = 64;
                    let grid_p = dyadic_delta_grid(prev.radius);
                    let grid_c = dyadic_delta_grid(cur.radius);
                    let b_p = 4 * (prev.radius / 10).max(1);
                    let b_c = 4 * (cur.radius / 10).max(1);
                    let hp = geometric_height(
                        &prev.space,
                        &prev.rows,
                        b_p,
                        &grid_p,
                        0,
                        prev.rows.len() + 1,
                        &opts.geom,
                    )?;
                    let hc = geometric_height(
                        &cur.space,
                        &cur.rows,
                        b_c,
                        &grid_c,
                        0,
                        cur.rows.len() + 1,
                        &opts.geom,
                    )?;
                    opts.height_stable =
                        Some(!hp.truncated && !hc.truncated && hp.height == hc.height);
                    graded_verdict_geometric(&cur.space, &cur.rows, cur.radius, &opts)?
                }
            };
            let path = write_artifact(&cli.out, "graded.json", &verdict.to_json())?;
            for note in &verdict.truncated {
                eprintln!("notice: {note}");
            }
            println!(
                "graded overall = {} (height {}) ({})",
                verdict.overall,
                verdict.height,
                path.display()
            );
            Ok(if !verdict.overall {
                2
            } else if hard_truncations(&verdict.truncated) {
                3
            } else {
                0
            })
        }
        Cmd::Meet { src, bound, eps } => {
            let loaded = load(src, cli.verbose)?;
            need_subgroup(&loaded)?;
            let (graph, h, y): (&MetricGraph, Vec<usize>, Vec<usize>) = match &loaded {
                Loaded::Free { graph, families, .. } => {
                    let h: Vec<usize> =
                        families[0].pieces[0].iter().map(|&v| v as usize).collect();
                    let y: Vec<usize> = if families.len() >= 2 {
                        families[1].pieces[0].iter().map(|&v| v as usize).collect()
                    } else if families[0].pieces.len() >= 2 {
                        families[0].pieces[1].iter().map(|&v| v as usize).collect()
                    } else {
                        return Err(GglabError::Input(
                            "meet needs two pieces (second --subgroup or a second coset)"
                                .into(),
                        ));
                    };
                    (graph, h, y)
                }
                Loaded::Grid { cur, .. } => {
                    let mid = cur.radius as usize;
                    (
                        &cur.space,
                        cur.rows[mid].iter().map(|&v| v as usize).collect(),
                        cur.rows[mid + 1].iter().map(|&v| v as usize).collect(),
                    )
                }
            };
            let (num, den) = eps
                .split_once('/')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .ok_or_else(|| GglabError::Input(format!("bad --eps '{eps}', want num/den")))?;
            let params = MeetingParams::new(2 * *bound as HLen, num, den, 0)?;
            let rep = detect_meetings(graph, &h, &y, &params, true)?;
            let path = write_artifact(&cli.out, "meet.json", &rep.to_json(graph))?;
            let rows: Vec<String> = rep
                .pairs
                .iter()
                .map(|&(x1, x2)| format!("{},{}", graph.name(x1), graph.name(x2)))
                .collect();
            write_csv(
                &cli.out,
                "meet.csv",
                "# meeting pairs: x1 and x2 are vertex names of detected meeting points",
                "x1,x2",
                &rows,
            )?;
            println!("{} meeting pair(s) ({})", rep.pairs.len(), path.display());
            Ok(0)
        }
        Cmd::Roundtrip { src, bound } => {
            let loaded = load(src, cli.verbose)?;
            let mut opts = GradedOptions::default();
            opts.seed = cli.seed;
            opts.embed.seed = cli.seed;
            let rec = match &loaded {
                Loaded::Free { presentation, families, graph, ball, .. } => {
                    need_subgroup(&loaded)?;
                    let prev_r = src.radius.saturating_sub(2).max(1);
                    let prev_ball = build_ball(presentation, prev_r, vertex_budget())?;
                    let prev_graph = prev_ball.metric_graph();
                    let prev_fam = coset_pieces(&families[0].subgroup, &prev_ball, None, 2)?;
                    let input = RoundtripInput {
                        base: graph,
                        orbit: &families[0].pieces[0],
                        pieces: &families[0].pieces,
                        safe_radius: ball.safe_radius,
                        prev: Some((&prev_graph, &prev_fam.pieces, prev_ball.safe_radius)),
                    };
                    roundtrip_theorem_check(&input, &opts, 2 * *bound as HLen, 256)?
                }
                Loaded::Grid { cur, prev } => {
                    opts.max_level = 64;
                    let input = RoundtripInput {
                        base: &cur.space,
                        orbit: &cur.rows[cur.radius as usize],
                        pieces: &cur.rows,
                        safe_radius: cur.radius,
                        prev: Some((&prev.space, &prev.rows, prev.radius)),
                    };
                    roundtrip_theorem_check(&input, &opts, 2 * *bound as HLen, 256)?
                }
            };
            let path = write_artifact(&cli.out, "roundtrip.json", &rec.to_json())?;
            let rows: Vec<String> = rec
                .properness_table
                .iter()
                .map(|(d, c)| format!("{d},{c}"))
                .collect();
            write_csv(
                &cli.out,
                "properness.csv",
                "# uniform properness: D0 = ball radius (whole units); count = max orbit points in a D0-ball over sampled centers",
                "D0,count",
                &rows,
            )?;
            for note in &rec.graded.truncated {
                eprintln!("notice: {note}");
            }
            println!(
                "quasiconvex = {}, graded = {}, agreement = {} ({})",
                rec.quasiconvex,
                rec.graded.overall,
                rec.agreement,
                path.display()
            );
            Ok(if !rec.agreement {
                2
            } else if hard_truncations(&rec.graded.truncated) {
                3
            } else {
                0
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
