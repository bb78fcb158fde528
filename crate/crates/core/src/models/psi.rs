//! The PSI model family and its batched training/inference step.

use rand::Rng;

use super::config::{Estimator, ModelConfig, ReadoutKind, Variant};
use crate::autodiff::{Matrix, ParameterStore, Tape, Var};
use crate::error::{invalid, Result};
use crate::graph::{Edge, EdgeSource, GlobalGraph, KhopPartition, NodeId, SubgraphRecord};
use crate::infomax::{
    augment, cross_subgraph_negatives, gd_loss, infonce_loss, khop_loss, ppr_diffusion,
    row_permutation, Augmentation, LossWeights, SubgraphView, DEFAULT_DENSE_CAP,
};
use crate::nn::{
    Discriminator, EmbeddingTable, LocalGraph, Mlp2, PreMixerKind, PredictionHead, Readout,
    SageConfig, SageEncoder,
};

/// Read-only data a step needs besides the batch itself.
#[derive(Clone, Copy, Debug)]
pub struct BatchContext<'a> {
    pub graph: &'a GlobalGraph,
    pub records: &'a [SubgraphRecord],
}

/// One partial observation of a record.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub record_index: usize,
    /// In observation order.
    pub observed: Vec<NodeId>,
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// B x C.
    pub logits: Var,
    pub loss_graph: Option<Var>,
    pub loss_infomax: Option<Var>,
    pub loss_khop: Option<Var>,
    pub loss_second: Option<Var>,
    pub total: Option<Var>,
}

/// Plain values of a [`Forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub logits: Matrix,
    pub loss_graph: Option<f64>,
    pub loss_infomax: Option<f64>,
    pub loss_khop: Option<f64>,
    pub loss_second: Option<f64>,
    pub total: Option<f64>,
}

impl StepOutput {
    pub fn from_forward(tape: &Tape, fwd: &Forward) -> Result<Self> {
        let get = |v: Option<Var>| v.map(|v| tape.scalar(v)).transpose();
        Ok(Self {
            logits: tape.value(fwd.logits).clone(),
            loss_graph: get(fwd.loss_graph)?,
            loss_infomax: get(fwd.loss_infomax)?,
            loss_khop: get(fwd.loss_khop)?,
            loss_second: get(fwd.loss_second)?,
            total: get(fwd.total)?,
        })
    }

    /// `graph + lambda * infomax`, or `(graph + lambda_khop * khop) +
    /// lambda_second * second`, in the same floating-point order as the step.
    pub fn recompose(&self, weights: &LossWeights) -> Option<f64> {
        let mut total = self.loss_graph?;
        if let Some(l) = self.loss_infomax {
            total += l * weights.lambda_single;
        }
        if let Some(l) = self.loss_khop {
            total += l * weights.lambda_khop;
        }
        if let Some(l) = self.loss_second {
            total += l * weights.lambda_second;
        }
        Some(total)
    }
}

/// Encoder-readout-head pipeline plus the variant's InfoMax machinery.
#[derive(Clone, Debug)]
pub struct PsiModel {
    pub config: ModelConfig,
    pub features: EmbeddingTable,
    pub encoder: SageEncoder,
    pub readout: Readout,
    /// Second, non-shared encoder and readout for the diffused view.
    pub diffusion: Option<(SageEncoder, Readout)>,
    pub discriminator: Option<Discriminator>,
    pub pool_mlp: Option<Mlp2>,
    pub second_discriminator: Option<Discriminator>,
    pub head: PredictionHead,
    pub num_classes: usize,
}

/// Everything computed for one item before the InfoMax terms.
struct ItemPass {
    s_obs: Var,
    /// Summary fed to the head and to a second stage.
    summary: Var,
    loss_khop: Option<Var>,
}

impl PsiModel {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        config: ModelConfig,
        features: EmbeddingTable,
        num_classes: usize,
        g_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if num_classes < 2 {
            return invalid(format!("need at least 2 classes, got {num_classes}"));
        }
        let f = config.hidden_dim;
        let sage = SageConfig {
            in_dim: features.cols,
            hidden: f,
            skip: config.skip,
            bidirectional: config.bidirectional,
            dropout: config.dropout,
        };
        let encoder = SageEncoder::new(store, "encoder", &sage, rng)?;
        let make_readout =
            |store: &mut ParameterStore, name: &str, rng: &mut R| -> Result<Readout> {
                match config.readout_kind() {
                    ReadoutKind::MeanMlp => Readout::mean_mlp(store, name, f, rng),
                    ReadoutKind::Attention => Readout::attention(
                        store,
                        name,
                        f,
                        PreMixerKind::Mlp,
                        config
                            .use_positional_encoding
                            .then_some(config.max_positions),
                        rng,
                    ),
                }
            };
        let readout = make_readout(store, "readout", rng)?;
        let variant = config.kind.variant;
        let diffusion = if variant == Variant::PsMvgrl {
            let enc = SageEncoder::new(store, "encoder_ppr", &sage, rng)?;
            Some((enc, make_readout(store, "readout_ppr", rng)?))
        } else {
            None
        };
        let discriminator = match config.estimator() {
            None => None,
            Some(Estimator::Gd) => Some(Discriminator::bilinear(store, "discriminator", f, rng)?),
            Some(Estimator::InfoNce) => Some(Discriminator::cosine(config.temperature)?),
        };
        let pool_mlp = if variant == Variant::Khop {
            Some(Mlp2::new(store, "pool", f, rng)?)
        } else {
            None
        };
        let second_discriminator = match config.kind.second {
            Some(_) => Some(Discriminator::bilinear(
                store,
                "discriminator_second",
                f,
                rng,
            )?),
            None => None,
        };
        let head_dim = if variant == Variant::Khop && config.head_uses_observed_summary {
            2 * f
        } else {
            f
        };
        let head = PredictionHead::new(store, "head", head_dim, num_classes, g_dim, rng)?;
        Ok(Self {
            config,
            features,
            encoder,
            readout,
            diffusion,
            discriminator,
            pool_mlp,
            second_discriminator,
            head,
            num_classes,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.kind.variant
    }

    fn feature_rows(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ids: &[NodeId],
        masked: Option<&[bool]>,
    ) -> Result<Var> {
        let x = self.features.gather(tape, store, ids)?;
        match masked {
            Some(m) if m.iter().any(|&b| b) => {
                let mut keep = Matrix::filled(ids.len(), self.features.cols, 1.0);
                for (r, _) in m.iter().enumerate().filter(|(_, &b)| b) {
                    keep.row_mut(r).fill(0.0);
                }
                let keep = tape.constant(keep);
                tape.mul(x, keep)
            }
            _ => Ok(x),
        }
    }

    fn full_edges(&self, ctx: &BatchContext<'_>, record: &SubgraphRecord) -> Vec<Edge> {
        match self.config.full_edge_source {
            EdgeSource::Subgraph => record.edges.clone(),
            EdgeSource::Global => ctx.graph.induced_edges(&record.node_ids),
        }
    }

    fn diffused_graph(&self, ids: &[NodeId], edges: &[Edge]) -> Result<LocalGraph> {
        let pos: std::collections::HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut local = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            match (pos.get(u), pos.get(v)) {
                (Some(&a), Some(&b)) => local.push((a, b)),
                _ => return invalid(format!("edge ({u}, {v}) outside the view")),
            }
        }
        let weighted = ppr_diffusion(
            ids.len(),
            &local,
            self.config.ppr_alpha,
            self.config.ppr_top_t,
            DEFAULT_DENSE_CAP,
        )?;
        Ok(LocalGraph::from_local(ids.len(), &weighted))
    }

    fn summarize(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        readout: &Readout,
        h: Var,
    ) -> Result<Var> {
        let n = tape.shape(h).0;
        let positions: Vec<usize> = (0..n).collect();
        let pos = self
            .config
            .use_positional_encoding
            .then_some(positions.as_slice());
        readout.forward(tape, store, h, pos)
    }

    /// Observed-node summary: encode the partial subgraph and read it out.
    fn observed_summary<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        item: &BatchItem,
        rng: &mut R,
    ) -> Result<Var> {
        let record = &ctx.records[item.record_index];
        let partial =
            crate::graph::induced_partial_subgraph(record, item.record_index, &item.observed)?;
        let x = self.feature_rows(tape, store, &partial.observed_ids, None)?;
        let g = LocalGraph::new(&partial.observed_ids, &partial.observed_edges)?;
        let h = self.encoder.forward(tape, store, x, &g, rng)?;
        self.summarize(tape, store, &self.readout, h)
    }

    /// Reconstructed summary from the scored k-hop neighborhood, plus the
    /// k-hop loss when training.
    pub fn khop_forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        item: &BatchItem,
        s_obs: Var,
        rng: &mut R,
    ) -> Result<(Var, Option<Var>)> {
        let (Some(pool), Some(disc)) = (&self.pool_mlp, &self.discriminator) else {
            return invalid("khop_forward needs a k-hop model");
        };
        let cfg = &self.config;
        let record = &ctx.records[item.record_index];
        let p_d = if tape.is_training() { cfg.p_d } else { 0.0 };
        let part = KhopPartition::build(
            ctx.graph,
            record,
            &item.observed,
            cfg.k,
            cfg.khop_cap,
            p_d,
            rng,
        )?;
        let mut ids = item.observed.clone();
        ids.extend_from_slice(&part.neighbors);
        let x = self.feature_rows(tape, store, &ids, None)?;
        let g = LocalGraph::new(&ids, &part.edges_khop)?;
        let h = self.encoder.forward(tape, store, x, &g, rng)?;
        let d = disc.score(tape, store, h, s_obs)?;

        let n_obs = item.observed.len();
        let candidates: Vec<usize> = if cfg.pool_includes_observed || part.neighbors.is_empty() {
            (0..ids.len()).collect()
        } else {
            (n_obs..ids.len()).collect()
        };
        let scores: Vec<f64> = tape.value(d).as_slice().to_vec();
        let idx = top_k_indices(&scores, &ids, &candidates, cfg.pool_ratio);
        let s_khop = attention_pool(tape, store, pool, d, h, &idx)?;

        let loss = if tape.is_training() {
            let in_sub: std::collections::HashSet<NodeId> =
                part.in_subgraph.iter().copied().collect();
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (row, v) in ids.iter().enumerate() {
                if row < n_obs || in_sub.contains(v) {
                    pos.push(row);
                } else {
                    neg.push(row);
                }
            }
            let pos = if pos.is_empty() {
                None
            } else {
                Some(tape.gather_rows(d, &pos)?)
            };
            let neg = if neg.is_empty() {
                None
            } else {
                Some(tape.gather_rows(d, &neg)?)
            };
            Some(khop_loss(tape, pos, neg)?)
        } else {
            None
        };
        Ok((s_khop, loss))
    }

    fn item_pass<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        item: &BatchItem,
        rng: &mut R,
    ) -> Result<ItemPass> {
        let s_obs = self.observed_summary(tape, store, ctx, item, rng)?;
        if self.variant() != Variant::Khop {
            return Ok(ItemPass {
                s_obs,
                summary: s_obs,
                loss_khop: None,
            });
        }
        let (s_khop, loss_khop) = self.khop_forward(tape, store, ctx, item, s_obs, rng)?;
        Ok(ItemPass {
            s_obs,
            summary: s_khop,
            loss_khop,
        })
    }

    fn logits(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        item: &BatchItem,
        pass: &ItemPass,
    ) -> Result<Var> {
        let record = &ctx.records[item.record_index];
        let input = if self.variant() == Variant::Khop && self.config.head_uses_observed_summary {
            tape.concat_cols(&[pass.summary, pass.s_obs])?
        } else {
            pass.summary
        };
        let g = if self.head.g_transform.is_some() {
            match &record.subgraph_feature {
                Some(g) => Some(g.as_slice()),
                None => {
                    return invalid(format!(
                        "record {} lacks a subgraph feature",
                        item.record_index
                    ))
                }
            }
        } else {
            None
        };
        self.head.forward(tape, store, input, g)
    }

    /// Encoded full subgraph and its row-shuffled corruption.
    fn full_and_corrupt<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        record_index: usize,
        rng: &mut R,
    ) -> Result<(Var, Var)> {
        let record = &ctx.records[record_index];
        let edges = self.full_edges(ctx, record);
        let g = LocalGraph::new(&record.node_ids, &edges)?;
        let x = self.feature_rows(tape, store, &record.node_ids, None)?;
        let h = self.encoder.forward(tape, store, x, &g, rng)?;
        let perm = row_permutation(record.len(), rng);
        let xs = tape.gather_rows(x, &perm)?;
        let hs = self.encoder.forward(tape, store, xs, &g, rng)?;
        Ok((h, hs))
    }

    fn encode_full<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        record_index: usize,
        rng: &mut R,
    ) -> Result<Var> {
        let record = &ctx.records[record_index];
        let edges = self.full_edges(ctx, record);
        let g = LocalGraph::new(&record.node_ids, &edges)?;
        let x = self.feature_rows(tape, store, &record.node_ids, None)?;
        self.encoder.forward(tape, store, x, &g, rng)
    }

    /// Row-shuffle GD loss against `summary` (DGI style).
    fn dgi_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        summaries: &[Var],
        disc: &Discriminator,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        let mut losses = Vec::with_capacity(items.len());
        for (item, &s) in items.iter().zip(summaries) {
            let (h, hs) = self.full_and_corrupt(tape, store, ctx, item.record_index, rng)?;
            let pos = disc.score(tape, store, h, s)?;
            let neg = disc.score(tape, store, hs, s)?;
            losses.push(gd_loss(tape, pos, neg)?);
        }
        Ok(losses)
    }

    /// GD loss with nodes of the other batch subgraphs as negatives.
    fn infograph_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        summaries: &[Var],
        disc: &Discriminator,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        if items.len() < 2 {
            return invalid(
                "training with in-batch negatives needs a batch of at least 2 subgraphs",
            );
        }
        let full: Vec<Var> = items
            .iter()
            .map(|item| self.encode_full(tape, store, ctx, item.record_index, rng))
            .collect::<Result<_>>()?;
        let mut losses = Vec::with_capacity(items.len());
        for (i, &s) in summaries.iter().enumerate() {
            let negatives = cross_subgraph_negatives(tape, &full, i)?;
            let pos = disc.score(tape, store, full[i], s)?;
            let neg = disc.score(tape, store, negatives, s)?;
            losses.push(gd_loss(tape, pos, neg)?);
        }
        Ok(losses)
    }

    /// Cross-view GD loss between the raw and PPR-diffused views.
    fn mvgrl_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        summaries: &[Var],
        disc: &Discriminator,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        let (enc_b, readout_b) = self
            .diffusion
            .as_ref()
            .expect("mvgrl model has a diffusion branch");
        let mut losses = Vec::with_capacity(items.len());
        for (item, &s_a) in items.iter().zip(summaries) {
            let record = &ctx.records[item.record_index];
            let partial =
                crate::graph::induced_partial_subgraph(record, item.record_index, &item.observed)?;
            let x_obs = self.feature_rows(tape, store, &partial.observed_ids, None)?;
            let g_obs = self.diffused_graph(&partial.observed_ids, &partial.observed_edges)?;
            let h_obs_b = enc_b.forward(tape, store, x_obs, &g_obs, rng)?;
            let s_b = self.summarize(tape, store, readout_b, h_obs_b)?;

            let edges = self.full_edges(ctx, record);
            let g_raw = LocalGraph::new(&record.node_ids, &edges)?;
            let g_ppr = self.diffused_graph(&record.node_ids, &edges)?;
            let x = self.feature_rows(tape, store, &record.node_ids, None)?;
            let perm = row_permutation(record.len(), rng);
            let xs = tape.gather_rows(x, &perm)?;
            let h_a = self.encoder.forward(tape, store, x, &g_raw, rng)?;
            let hs_a = self.encoder.forward(tape, store, xs, &g_raw, rng)?;
            let h_b = enc_b.forward(tape, store, x, &g_ppr, rng)?;
            let hs_b = enc_b.forward(tape, store, xs, &g_ppr, rng)?;

            let pos_a = disc.score(tape, store, h_a, s_b)?;
            let neg_a = disc.score(tape, store, hs_a, s_b)?;
            let pos_b = disc.score(tape, store, h_b, s_a)?;
            let neg_b = disc.score(tape, store, hs_b, s_a)?;
            let la = gd_loss(tape, pos_a, neg_a)?;
            let lb = gd_loss(tape, pos_b, neg_b)?;
            losses.push(tape.add(la, lb)?);
        }
        Ok(losses)
    }

    /// InfoNCE between each observed summary and its augmented full-subgraph
    /// summary, with the other augmented summaries of the batch as negatives.
    fn graphcl_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        summaries: &[Var],
        disc: &Discriminator,
        rng: &mut R,
    ) -> Result<Var> {
        let b = items.len();
        if b < 2 {
            return invalid(
                "training with in-batch negatives needs a batch of at least 2 subgraphs",
            );
        }
        let options = Augmentation::all(self.config.aug_p);
        let mut augmented = Vec::with_capacity(b);
        for item in items {
            let record = &ctx.records[item.record_index];
            let view = SubgraphView::new(record.node_ids.clone(), self.full_edges(ctx, record));
            let aug = options[rng.random_range(0..options.len())];
            let view = augment(aug, &view, rng)?;
            let x = self.feature_rows(tape, store, &view.node_ids, Some(&view.masked))?;
            let g = LocalGraph::new(&view.node_ids, &view.edges)?;
            let h = self.encoder.forward(tape, store, x, &g, rng)?;
            augmented.push(self.summarize(tape, store, &self.readout, h)?);
        }
        let all = tape.concat_rows(&augmented)?;
        let mut pos = Vec::with_capacity(b);
        let mut neg = Vec::with_capacity(b);
        for (i, &s) in summaries.iter().enumerate() {
            let scores = disc.score(tape, store, all, s)?;
            pos.push(tape.gather_rows(scores, &[i])?);
            let others: Vec<usize> = (0..b).filter(|&j| j != i).collect();
            let n = tape.gather_rows(scores, &others)?;
            neg.push(tape.transpose(n));
        }
        let pos = tape.concat_rows(&pos)?;
        let neg = tape.concat_rows(&neg)?;
        infonce_loss(tape, pos, neg)
    }

    fn mean_of(tape: &mut Tape, losses: &[Var]) -> Result<Var> {
        if losses.len() == 1 {
            return Ok(losses[0]);
        }
        let stacked = tape.concat_rows(losses)?;
        tape.mean_all(stacked)
    }

    /// Runs [`Self::forward`] on a fresh tape and returns plain values.
    pub fn step<R: Rng + ?Sized>(
        &self,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        training: bool,
        rng: &mut R,
    ) -> Result<StepOutput> {
        let mut tape = Tape::new(training);
        let fwd = self.forward(&mut tape, store, ctx, items, rng)?;
        StepOutput::from_forward(&tape, &fwd)
    }

    /// Training forward pass whose total-loss gradient is added to the
    /// store's accumulated gradients, scaled by `scale`.
    pub fn accumulate_gradients<R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        scale: f64,
        rng: &mut R,
    ) -> Result<StepOutput> {
        let mut tape = Tape::new(true);
        let fwd = self.forward(&mut tape, store, ctx, items, rng)?;
        let total = fwd.total.expect("training forward has a total");
        let scaled = tape.scale(total, scale);
        tape.backward_into(scaled, store)?;
        StepOutput::from_forward(&tape, &fwd)
    }

    /// Forward pass over a batch. On a training tape the InfoMax losses,
    /// cross-entropy and weighted total are also built.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ctx: &BatchContext<'_>,
        items: &[BatchItem],
        rng: &mut R,
    ) -> Result<Forward> {
        if items.is_empty() {
            return invalid("empty batch");
        }
        if let Some(bad) = items.iter().find(|it| it.record_index >= ctx.records.len()) {
            return invalid(format!("record index {} out of range", bad.record_index));
        }
        let mut passes = Vec::with_capacity(items.len());
        let mut logit_rows = Vec::with_capacity(items.len());
        for item in items {
            let pass = self.item_pass(tape, store, ctx, item, rng)?;
            logit_rows.push(self.logits(tape, store, ctx, item, &pass)?);
            passes.push(pass);
        }
        let logits = tape.concat_rows(&logit_rows)?;
        let mut out = Forward {
            logits,
            loss_graph: None,
            loss_infomax: None,
            loss_khop: None,
            loss_second: None,
            total: None,
        };
        if !tape.is_training() {
            return Ok(out);
        }

        let labels: Vec<usize> = items
            .iter()
            .map(|it| ctx.records[it.record_index].label)
            .collect();
        let loss_graph = cross_entropy(tape, logits, &labels)?;
        let weights = self.config.weights;
        let mut total = loss_graph;
        out.loss_graph = Some(loss_graph);

        let s_obs: Vec<Var> = passes.iter().map(|p| p.s_obs).collect();
        match (self.variant(), self.config.kind.second) {
            (Variant::Baseline, _) => {}
            (Variant::Khop, second) => {
                let khop: Vec<Var> = passes
                    .iter()
                    .map(|p| p.loss_khop.expect("training k-hop pass"))
                    .collect();
                let lk = Self::mean_of(tape, &khop)?;
                let weighted = tape.scale(lk, weights.lambda_khop);
                total = tape.add(total, weighted)?;
                out.loss_khop = Some(lk);
                if let Some(second) = second {
                    let disc = self
                        .second_discriminator
                        .as_ref()
                        .expect("two-stage model has a second discriminator");
                    let s_khop: Vec<Var> = passes.iter().map(|p| p.summary).collect();
                    let per_item = match second {
                        Variant::PsDgi => {
                            self.dgi_loss(tape, store, ctx, items, &s_khop, disc, rng)?
                        }
                        Variant::PsInfoGraph => {
                            self.infograph_loss(tape, store, ctx, items, &s_khop, disc, rng)?
                        }
                        other => return invalid(format!("unsupported second stage {other}")),
                    };
                    let l2 = Self::mean_of(tape, &per_item)?;
                    let weighted = tape.scale(l2, weights.lambda_second);
                    total = tape.add(total, weighted)?;
                    out.loss_second = Some(l2);
                }
            }
            (variant, _) => {
                let disc = self
                    .discriminator
                    .as_ref()
                    .expect("infomax model has a discriminator");
                let li = match variant {
                    Variant::PsDgi => {
                        let l = self.dgi_loss(tape, store, ctx, items, &s_obs, disc, rng)?;
                        Self::mean_of(tape, &l)?
                    }
                    Variant::PsInfoGraph => {
                        let l = self.infograph_loss(tape, store, ctx, items, &s_obs, disc, rng)?;
                        Self::mean_of(tape, &l)?
                    }
                    Variant::PsMvgrl => {
                        let l = self.mvgrl_loss(tape, store, ctx, items, &s_obs, disc, rng)?;
                        Self::mean_of(tape, &l)?
                    }
                    Variant::PsGraphCl => {
                        self.graphcl_loss(tape, store, ctx, items, &s_obs, disc, rng)?
                    }
                    Variant::Baseline | Variant::Khop => unreachable!(),
                };
                let weighted = tape.scale(li, weights.lambda_single);
                total = tape.add(total, weighted)?;
                out.loss_infomax = Some(li);
            }
        }
        out.total = Some(total);
        Ok(out)
    }
}

/// Mean negative log-likelihood of `labels` under row-wise softmax.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (b, c) = tape.shape(logits);
    if labels.len() != b || b == 0 {
        return invalid(format!("{} labels for {b} logit rows", labels.len()));
    }
    let mut onehot = Matrix::zeros(b, c);
    for (r, &y) in labels.iter().enumerate() {
        if y >= c {
            return invalid(format!("label {y} outside {c} classes"));
        }
        onehot.set(r, y, 1.0);
    }
    let logp = tape.log_softmax_rows(logits);
    let mask = tape.constant(onehot);
    let picked = tape.mul(logp, mask)?;
    let sum = tape.sum_all(picked);
    Ok(tape.scale(sum, -1.0 / b as f64))
}

/// `softmax(d[idx])^T MLP(h[idx])` for scores `d` (n x 1) and rows `h`.
pub fn attention_pool(
    tape: &mut Tape,
    store: &ParameterStore,
    mlp: &Mlp2,
    d: Var,
    h: Var,
    idx: &[usize],
) -> Result<Var> {
    if idx.is_empty() {
        return invalid("pooling over an empty selection");
    }
    let d_top = tape.gather_rows(d, idx)?;
    let d_top = tape.transpose(d_top);
    let weights = tape.softmax_rows(d_top);
    let h_top = tape.gather_rows(h, idx)?;
    let z = mlp.forward(tape, store, h_top)?;
    tape.matmul(weights, z)
}

/// Top `ceil(ratio * |candidates|)` candidate rows by score (at least one),
/// ties broken by the lower node id.
pub fn top_k_indices(
    scores: &[f64],
    node_ids: &[NodeId],
    candidates: &[usize],
    ratio: f64,
) -> Vec<usize> {
    let count =
        ((ratio * candidates.len() as f64).ceil() as usize).clamp(1, candidates.len().max(1));
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(node_ids[a].cmp(&node_ids[b]))
    });
    order.truncate(count);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_prefers_scores_then_lower_ids() {
        let scores = [0.5, 2.0, 0.5, 0.5];
        let ids = [7, 3, 2, 9];
        assert_eq!(top_k_indices(&scores, &ids, &[0, 1, 2, 3], 0.5), vec![1, 2]);
        assert_eq!(
            top_k_indices(&scores, &ids, &[0, 1, 2, 3], 0.75),
            vec![1, 2, 0]
        );
        assert_eq!(top_k_indices(&scores, &ids, &[0, 2, 3], 1e-3), vec![2]);
        assert_eq!(top_k_indices(&scores, &ids, &[0, 3], 1.0), vec![0, 3]);
    }

    #[test]
    fn cross_entropy_uniform_is_log_c() {
        let mut tape = Tape::new(true);
        let l = tape.constant(Matrix::zeros(3, 4));
        let ce = cross_entropy(&mut tape, l, &[0, 3, 1]).unwrap();
        assert!((tape.scalar(ce).unwrap() - 4.0_f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&mut tape, l, &[0, 4, 1]).is_err());
    }
}
