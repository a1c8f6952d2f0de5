mod io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tinyasr::am::{lstm_forward, read_features, stack_frames, AcousticModel, LayerShape, Topology};
use tinyasr::decoder::{benchmark, decode, BiasModel, DecodeResult, DecoderConfig, RescoringLm};
use tinyasr::footprint::FootprintReport;
use tinyasr::graph::{
    add_ctc_topology, build_lexicon_fst, compose_lg, read_lexicon, write_overlay, BackoffMode, PersonalizedGraph,
    WeightedFst,
};
use tinyasr::louds::LoudsNGramModel;
use tinyasr::ngram::{
    estimate_linear_weights, interpolate_bayesian, interpolate_linear, prune_entropy, read_corpus, sweep_priors,
    train_katz, write_arpa, Vocabulary, CONTACTS_CLASS,
};
use tinyasr::svd::{compress_model, FactorizationPlan};

use crate::io::{read_contact_sets, read_graph, read_lm, read_model, read_phones, read_posteriors, write_file, AnyLm};

/// Embedded CTC speech recognition toolkit.
#[derive(Parser, Debug)]
#[command(name = "tinyasr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a randomly initialized float acoustic model.
    ModelInit {
        #[arg(long, value_enum, default_value = "reference")]
        topology: TopologyKind,
        /// Override the number of LSTM layers.
        #[arg(long)]
        layers: Option<usize>,
        /// Override the cells per layer.
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weights are drawn from [-scale, scale].
        #[arg(long, default_value_t = 0.1)]
        scale: f32,
        #[arg(long)]
        output: PathBuf,
    },
    /// Convert a float acoustic model to 8-bit weights.
    QuantizeModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Factorize each layer's recurrent and inter-layer weights with a shared low-rank projection.
    CompressSvd {
        #[arg(long)]
        model: PathBuf,
        /// Projection rank per layer, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        ranks: Vec<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a Katz backoff n-gram model from a corpus (one sentence per line).
    LmTrain {
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Remove n-grams whose relative-entropy cost is below the threshold.
    LmPrune {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mix several n-gram models into one.
    LmInterpolate {
        /// Component models (ARPA), repeated.
        #[arg(long, required = true, num_args = 1..)]
        lm: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "linear")]
        mode: MixMode,
        /// Fixed mixture weights (linear) or task priors (bayesian).
        #[arg(long, value_delimiter = ',', conflicts_with = "dev")]
        weights: Option<Vec<f64>>,
        /// Development corpora used to estimate weights; one per component for bayesian mode.
        #[arg(long, num_args = 1..)]
        dev: Vec<PathBuf>,
        /// Prior grid resolution for bayesian mode.
        #[arg(long, default_value_t = 10)]
        grid_steps: usize,
        #[arg(long, default_value_t = 50)]
        em_iterations: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compile an ARPA model into the LOUDS binary format.
    LmCompileLouds {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compose a lexicon with an n-gram model into a CTC decoder graph.
    GraphBuild {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// Phone inventory file; the built-in 41 phones by default.
        #[arg(long)]
        phones: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "epsilon")]
        backoff: BackoffKind,
        #[arg(long)]
        output: PathBuf,
    },
    /// Validate contacts against a graph and store them as an overlay file.
    InjectContacts {
        #[arg(long)]
        graph: PathBuf,
        /// Contacts file: name<TAB>phones[<TAB>weight] per line.
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long, default_value = CONTACTS_CLASS)]
        class: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode posteriorgrams (EPG1) or features (EFT1, needs --model).
    Decode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the JSON result records here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Measure real-time factors of acoustic scoring and decoding.
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Also time the dequantized float version of a quantized model.
        #[arg(long)]
        compare_float: bool,
    },
    /// Report the byte size of each bundle component.
    SizeReport {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        rescore_lm: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        contacts: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    rescore_lm: Option<PathBuf>,
    /// Contacts overlay (ECO1) or contacts TSV.
    #[arg(long)]
    contacts: Option<PathBuf>,
    #[arg(long, default_value = CONTACTS_CLASS)]
    class: String,
    /// Bonus scale for completing a contact name, <= 0.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    bias_strength: f64,
    #[arg(long, default_value_t = 12.0)]
    beam: f64,
    #[arg(long, default_value_t = 2000)]
    max_active: usize,
    #[arg(long, default_value_t = 1.0)]
    acoustic_scale: f64,
    /// Only blank self-loops; repeated labels need no separating blank.
    #[arg(long)]
    relaxed_ctc: bool,
    #[arg(long, default_value_t = 8)]
    epsilon_depth: usize,
}

impl SearchArgs {
    fn config(&self) -> DecoderConfig {
        DecoderConfig {
            beam: self.beam,
            max_active: self.max_active,
            acoustic_scale: self.acoustic_scale,
            rescoring: true,
            bias_strength: self.bias_strength,
            strict_ctc: !self.relaxed_ctc,
            max_epsilon_depth: self.epsilon_depth,
            ..DecoderConfig::default()
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TopologyKind {
    Reference,
    Compressed,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum MixMode {
    Linear,
    Bayesian,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BackoffKind {
    Epsilon,
    Expanded,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::ModelInit {
            topology,
            layers,
            cells,
            seed,
            scale,
            output,
        } => {
            let mut t = match topology {
                TopologyKind::Reference => Topology::reference(),
                TopologyKind::Compressed => Topology::reference_compressed(),
            };
            if let Some(c) = cells {
                for l in &mut t.layers {
                    l.cells = c;
                    l.projection = l.projection.map(|r| r.min(c));
                }
            }
            if let Some(n) = layers {
                ensure!(n > 0, "--layers must be positive");
                let shape = t.layers.last().copied().unwrap_or(LayerShape { cells: 500, projection: None });
                t.layers.resize(n, shape);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = AcousticModel::random(&t, scale, &mut rng)?;
            write_file(&output, |w| model.write_to(w))?;
            eprintln!("wrote {} parameters to {}", t.param_count(), output.display());
        }
        Command::QuantizeModel { model, output } => {
            let m = read_model(&model)?;
            ensure!(!m.is_quantized(), "{} is already quantized", model.display());
            let q = m.quantize()?;
            write_file(&output, |w| q.write_to(w))?;
            eprintln!("{} -> {} bytes", m.serialized_len(), q.serialized_len());
        }
        Command::CompressSvd { model, ranks, output } => {
            let m = read_model(&model)?;
            let c = compress_model(&m, &FactorizationPlan::new(ranks))?;
            write_file(&output, |w| c.write_to(w))?;
            eprintln!("{} -> {} parameters", m.topology().param_count(), c.topology().param_count());
        }
        Command::LmTrain { corpus, order, output } => {
            let sentences = read_corpus(io::open(&corpus)?).with_context(|| format!("reading {}", corpus.display()))?;
            let vocab = Vocabulary::from_sentences(&sentences)?;
            let lm = train_katz(&sentences, order, vocab)?;
            write_file(&output, |w| write_arpa(&lm, w))?;
            eprintln!("{} n-grams", lm.num_ngrams());
        }
        Command::LmPrune { lm, threshold, output } => {
            let model = read_lm(&lm)?;
            let pruned = prune_entropy(&model, threshold)?;
            write_file(&output, |w| write_arpa(&pruned, w))?;
            eprintln!("{} -> {} n-grams", model.num_ngrams(), pruned.num_ngrams());
        }
        Command::LmInterpolate {
            lm,
            mode,
            weights,
            dev,
            grid_steps,
            em_iterations,
            output,
        } => {
            let components = lm.iter().map(|p| read_lm(p)).collect::<Result<Vec<_>>>()?;
            let dev_sets = dev
                .iter()
                .map(|p| read_corpus(io::open(p)?).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let k = components.len();
            let weights = match (weights, dev_sets.is_empty(), mode) {
                (Some(w), _, _) => w,
                (None, true, _) => vec![1.0 / k as f64; k],
                (None, false, MixMode::Linear) => {
                    let pooled: Vec<Vec<String>> = dev_sets.concat();
                    estimate_linear_weights(&components, &pooled, em_iterations)?
                }
                (None, false, MixMode::Bayesian) => {
                    ensure!(dev_sets.len() == k, "bayesian mode needs one --dev corpus per component");
                    sweep_priors(&components, &dev_sets, grid_steps)?.priors
                }
            };
            let mixed = match mode {
                MixMode::Linear => interpolate_linear(&components, &weights)?,
                MixMode::Bayesian => interpolate_bayesian(&components, &weights)?,
            };
            write_file(&output, |w| write_arpa(&mixed, w))?;
            eprintln!("weights {weights:?}");
        }
        Command::LmCompileLouds { lm, output } => {
            let model = read_lm(&lm)?;
            let louds = LoudsNGramModel::build(&model)?;
            write_file(&output, |w| louds.write_to(w))?;
            eprintln!("{} n-grams, {} bytes", louds.num_ngrams(), louds.serialized_len());
        }
        Command::GraphBuild {
            lexicon,
            lm,
            phones,
            backoff,
            output,
        } => {
            let phones = read_phones(phones.as_deref())?;
            let lex = read_lexicon(io::open(&lexicon)?, phones).with_context(|| format!("reading {}", lexicon.display()))?;
            let model = read_lm(&lm)?;
            let mode = match backoff {
                BackoffKind::Epsilon => BackoffMode::Epsilon,
                BackoffKind::Expanded => BackoffMode::Expanded,
            };
            let g = add_ctc_topology(compose_lg(&build_lexicon_fst(&lex)?, &model, mode)?);
            write_file(&output, |w| g.write_to(w))?;
            eprintln!("{} states, {} arcs, {} class slots", g.num_states(), g.num_arcs(), g.slots().len());
        }
        Command::InjectContacts {
            graph,
            contacts,
            class,
            output,
        } => {
            let g = read_graph(&graph)?;
            let sets = read_contact_sets(&contacts, &class, g.phones())?;
            let mut pg = PersonalizedGraph::new(&g);
            for (class, entries) in &sets {
                pg.inject(class, entries)?;
            }
            write_file(&output, |w| write_overlay(w, &sets))?;
            eprintln!("{} overlay states, {} overlay arcs", pg.overlay_states(), pg.overlay_arcs());
        }
        Command::Decode {
            inputs,
            search,
            output,
            threads,
        } => run_decode(&inputs, &search, output.as_deref(), threads)?,
        Command::Bench {
            inputs,
            search,
            repetitions,
            compare_float,
        } => run_bench(&inputs, &search, repetitions, compare_float)?,
        Command::SizeReport {
            model,
            graph,
            rescore_lm,
            lexicon,
            contacts,
            json,
        } => {
            let mut report = FootprintReport::new();
            let parts = [
                ("acoustic model", model),
                ("decoder graph", graph),
                ("rescoring LM", rescore_lm),
                ("lexicon", lexicon),
                ("personalization overlay", contacts),
            ];
            for (name, path) in &parts {
                if let Some(p) = path {
                    report
                        .add_file(name, p)
                        .with_context(|| format!("cannot stat {}", p.display()))?;
                }
            }
            ensure!(!report.components().is_empty(), "size-report needs at least one component file");
            if json {
                let components: serde_json::Map<String, serde_json::Value> =
                    report.components().iter().map(|(n, b)| (n.clone(), json!(b))).collect();
                println!("{}", json!({"components": components, "total": report.total()}));
            } else {
                println!("{report}");
            }
        }
    }
    Ok(())
}

struct Session {
    graph: WeightedFst,
    model: Option<AcousticModel>,
    lm: Option<AnyLm>,
    contacts: Vec<(String, Vec<tinyasr::graph::ContactEntry>)>,
    config: DecoderConfig,
}

impl Session {
    fn load(args: &SearchArgs) -> Result<Self> {
        let config = args.config();
        config.validate()?;
        let Some(graph_path) = &args.graph else {
            bail!("--graph is required");
        };
        let graph = read_graph(graph_path)?;
        let model = args.model.as_deref().map(read_model).transpose()?;
        let lm = args.rescore_lm.as_deref().map(AnyLm::load).transpose()?;
        let contacts = match &args.contacts {
            Some(p) => read_contact_sets(p, &args.class, graph.phones())?,
            None => Vec::new(),
        };
        if args.bias_strength != 0.0 && contacts.is_empty() {
            bail!("--bias-strength needs --contacts");
        }
        Ok(Self {
            graph,
            model,
            lm,
            contacts,
            config,
        })
    }

    /// Graph with the contacts injected, and a bias model over the injected names.
    fn personalize(&self) -> Result<(PersonalizedGraph<'_>, Option<BiasModel>)> {
        let mut pg = PersonalizedGraph::new(&self.graph);
        let mut ids = Vec::new();
        for (class, entries) in &self.contacts {
            ids.extend(pg.inject(class, entries)?);
        }
        let bias = if ids.is_empty() { None } else { Some(BiasModel::from_words(&ids, 1.0)?) };
        Ok((pg, bias))
    }

    fn decode(&self, pg: &PersonalizedGraph<'_>, bias: Option<&BiasModel>, input: &Path) -> Result<DecodeResult> {
        let (post, step) = read_posteriors(input, self.model.as_ref(), self.config.step_seconds)?;
        let cfg = DecoderConfig {
            step_seconds: step,
            ..self.config.clone()
        };
        let lm = self.lm.as_ref().map(|l| l as &dyn RescoringLm);
        decode(&post, pg, &cfg, lm, bias).with_context(|| format!("decoding {}", input.display()))
    }
}

fn record(input: &Path, r: &DecodeResult) -> serde_json::Value {
    json!({
        "input": input.display().to_string(),
        "transcript": r.words.join(" "),
        "words": r.words,
        "score": r.score.is_finite().then_some(r.score),
        "acoustic": r.cost.acoustic,
        "graph": r.cost.graph,
        "rescore": r.cost.rescore,
        "bias": r.cost.bias,
        "success": r.success,
        "steps": r.steps,
        "rtf": r.rtf,
    })
}

fn run_decode(inputs: &[PathBuf], args: &SearchArgs, output: Option<&Path>, threads: usize) -> Result<()> {
    ensure!(threads >= 1, "--threads must be at least 1");
    let session = Session::load(args)?;
    let (pg, bias) = session.personalize()?;
    let chunk = inputs.len().div_ceil(threads);
    let results: Vec<Result<DecodeResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .chunks(chunk)
            .map(|part| {
                let (session, pg, bias) = (&session, &pg, bias.as_ref());
                s.spawn(move || part.iter().map(|p| session.decode(pg, bias, p)).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("decode worker panicked"))
            .collect()
    });
    let mut lines = String::new();
    for (input, r) in inputs.iter().zip(results) {
        let r = r?;
        lines.push_str(&record(input, &r).to_string());
        lines.push('\n');
        if output.is_some() {
            println!("{}", r.words.join(" "));
        }
    }
    match output {
        Some(p) => std::fs::write(p, lines).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{lines}"),
    }
    Ok(())
}

fn run_bench(inputs: &[PathBuf], args: &SearchArgs, repetitions: usize, compare_float: bool) -> Result<()> {
    let Some(model_path) = &args.model else {
        bail!("bench needs --model and feature files");
    };
    let model = read_model(model_path)?;
    let mut features = Vec::new();
    let mut durations = Vec::new();
    for p in inputs {
        let f = read_features(&mut io::open(p)?).with_context(|| format!("reading features {}", p.display()))?;
        durations.push(f.rows() as f64 * io::FRAME_SECONDS);
        features.push(stack_frames(&f, model.frontend())?);
    }
    let started = Instant::now();
    let scoring = benchmark(&features, &durations, repetitions, |x| lstm_forward(&model, x).map(drop))?;
    let mut out = json!({
        "utterances": inputs.len(),
        "repetitions": repetitions,
        "quantized": model.is_quantized(),
        "acoustic_rt50": scoring.rt50,
        "acoustic_rtf": scoring.per_utterance,
    });
    if compare_float {
        ensure!(model.is_quantized(), "--compare-float needs a quantized model");
        let float = model.dequantize();
        let r = benchmark(&features, &durations, repetitions, |x| lstm_forward(&float, x).map(drop))?;
        out["float_rt50"] = json!(r.rt50);
        out["float_rtf"] = json!(r.per_utterance);
    }
    if args.graph.is_some() {
        let session = Session::load(args)?;
        let (pg, bias) = session.personalize()?;
        let cfg = DecoderConfig {
            step_seconds: model.frontend().skip as f64 * io::FRAME_SECONDS,
            ..session.config.clone()
        };
        let posts = features
            .iter()
            .map(|x| lstm_forward(&model, x))
            .collect::<tinyasr::Result<Vec<_>>>()?;
        let lm = session.lm.as_ref().map(|l| l as &dyn RescoringLm);
        let r = benchmark(&posts, &durations, repetitions, |p| {
            decode(p, &pg, &cfg, lm, bias.as_ref()).map(drop)
        })?;
        out["decode_rt50"] = json!(r.rt50);
        out["decode_rtf"] = json!(r.per_utterance);
        let end_to_end: Vec<f64> = scoring.per_utterance.iter().zip(&r.per_utterance).map(|(a, b)| a + b).collect();
        out["rt50"] = json!(tinyasr::decoder::median(&end_to_end));
    } else {
        out["rt50"] = json!(scoring.rt50);
    }
    out["wall_seconds"] = json!(started.elapsed().as_secs_f64());
    println!("{out}");
    Ok(())
}
