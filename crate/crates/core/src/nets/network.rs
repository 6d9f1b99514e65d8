use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::iru::iru_cell;
use super::{ArchConfig, BlockKind, NetError, Result};
use crate::ndcore::{ParamSet, Tape, Tensor, Var, LAYER_NORM_EPS};

/// Inner steps between outer-latent updates in the deep-recursion block.
pub const DEEP_RECURSION_PERIOD: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Linear {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Linear {
    fn macs(&self) -> u64 {
        (self.fan_in * self.fan_out) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Cell {
    Iru {
        forget: Linear,
        input: Linear,
    },
    Lstm {
        input_gate: Linear,
        forget: Linear,
        output: Linear,
        candidate: Linear,
    },
    Residual {
        first: Linear,
        second: Linear,
    },
}

impl Cell {
    fn macs(&self) -> u64 {
        match self {
            Cell::Iru { forget, input } => forget.macs() + input.macs(),
            Cell::Lstm {
                input_gate,
                forget,
                output,
                candidate,
            } => input_gate.macs() + forget.macs() + output.macs() + candidate.macs(),
            Cell::Residual { first, second } => first.macs() + second.macs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Body {
    Recurrent {
        embed: Linear,
        norm: Norm,
        cells: Vec<Cell>,
        head: Linear,
    },
    DeepRecursion {
        embed: Linear,
        norm: Norm,
        inner: Cell,
        outer: Cell,
        head: Linear,
    },
    Mlp {
        hidden: Vec<Linear>,
        head: Linear,
    },
    DeepResnet {
        embed: Linear,
        norm: Norm,
        blocks: Vec<Vec<Linear>>,
        head: Linear,
    },
}

/// Multiply-accumulate counts per sample for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopCount {
    pub embed: u64,
    pub block: u64,
    pub head: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.embed + self.block + self.head
    }
}

struct Builder {
    params: ParamSet,
    rng: ChaCha8Rng,
}

impl Builder {
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias.
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.gen_range(-bound..=bound))
            .collect();
        let w = self
            .params
            .push(format!("{name}.w"), Tensor::new(vec![fan_in, fan_out], data).unwrap());
        let b = self.params.push(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        Linear {
            w,
            b,
            fan_in,
            fan_out,
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        let gamma = self.params.push(format!("{name}.gamma"), Tensor::filled(&[width], 1.0));
        let beta = self.params.push(format!("{name}.beta"), Tensor::zeros(&[width]));
        Norm { gamma, beta }
    }

    fn cell(&mut self, kind: BlockKind, name: &str, h: usize) -> Cell {
        match kind {
            BlockKind::Lstm => Cell::Lstm {
                input_gate: self.linear(&format!("{name}.input_gate"), 2 * h, h),
                forget: self.linear(&format!("{name}.forget"), 2 * h, h),
                output: self.linear(&format!("{name}.output"), 2 * h, h),
                candidate: self.linear(&format!("{name}.candidate"), 2 * h, h),
            },
            BlockKind::ResnetBlock => Cell::Residual {
                first: self.linear(&format!("{name}.first"), 2 * h, h),
                second: self.linear(&format!("{name}.second"), h, h),
            },
            _ => Cell::Iru {
                forget: self.linear(&format!("{name}.forget"), 2 * h, h),
                input: self.linear(&format!("{name}.input"), 2 * h, h),
            },
        }
    }
}

/// Per-cell recurrent state carried between steps.
#[derive(Clone, Copy)]
struct CellState {
    c: Var,
    h: Var,
}

/// A parameterized forward map with a call-time recurrent step count.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: ArchConfig,
    params: ParamSet,
    body: Body,
}

impl Network {
    /// Builds and initializes a network; the same seed gives bitwise-identical parameters.
    pub fn new(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            params: ParamSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let (inp, h, out) = (config.input, config.hidden, config.output);
        let body = match config.kind {
            BlockKind::Iru | BlockKind::Lstm | BlockKind::ResnetBlock => {
                let embed = b.linear("embed", inp, h);
                let norm = b.norm("embed_norm", h);
                let cells = (0..config.layers)
                    .map(|l| b.cell(config.kind, &format!("block{l}"), h))
                    .collect();
                let head = b.linear("head", h, out);
                Body::Recurrent {
                    embed,
                    norm,
                    cells,
                    head,
                }
            }
            BlockKind::IruDeepRecursion => {
                let embed = b.linear("embed", inp, h);
                let norm = b.norm("embed_norm", h);
                let inner = b.cell(BlockKind::Iru, "inner", h);
                let outer = b.cell(BlockKind::Iru, "outer", h);
                let head = b.linear("head", h, out);
                Body::DeepRecursion {
                    embed,
                    norm,
                    inner,
                    outer,
                    head,
                }
            }
            BlockKind::Mlp => {
                let mut hidden = vec![b.linear("hidden0", inp, h)];
                for l in 1..config.layers {
                    hidden.push(b.linear(&format!("hidden{l}"), h, h));
                }
                let head = b.linear("head", h, out);
                Body::Mlp { hidden, head }
            }
            BlockKind::DeepResnet => {
                let embed = b.linear("embed", inp, h);
                let norm = b.norm("embed_norm", h);
                let blocks = (0..config.blocks)
                    .map(|k| {
                        (0..config.layers)
                            .map(|l| b.linear(&format!("res{k}.layer{l}"), h, h))
                            .collect()
                    })
                    .collect();
                let head = b.linear("head", h, out);
                Body::DeepResnet {
                    embed,
                    norm,
                    blocks,
                    head,
                }
            }
        };
        Ok(Self {
            config: config.clone(),
            params: b.params,
            body,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Number of trainable scalars. Independent of the step count.
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.register(tape)
    }

    fn lin(tape: &mut Tape, pv: &[Var], l: Linear, x: Var) -> Result<Var> {
        Ok(tape.matmul_add(x, pv[l.w], pv[l.b])?)
    }

    fn embed(tape: &mut Tape, pv: &[Var], embed: Linear, norm: Norm, x: Var) -> Result<Var> {
        let h = Self::lin(tape, pv, embed, x)?;
        Ok(tape.layer_norm(h, pv[norm.gamma], pv[norm.beta], LAYER_NORM_EPS)?)
    }

    /// One cell update followed by the skip connection; returns the new state.
    fn step_cell(tape: &mut Tape, pv: &[Var], cell: &Cell, x: Var, st: CellState) -> Result<CellState> {
        match *cell {
            Cell::Iru { forget, input } => {
                let out = iru_cell(tape, x, st.c, [pv[forget.w], pv[forget.b], pv[input.w], pv[input.b]])?;
                let c = tape.add(out, st.c)?;
                Ok(CellState { c, h: c })
            }
            Cell::Lstm {
                input_gate,
                forget,
                output,
                candidate,
            } => {
                let xh = tape.concat(x, st.h)?;
                let i = Self::lin(tape, pv, input_gate, xh)?;
                let i = tape.sigmoid(i)?;
                let f = Self::lin(tape, pv, forget, xh)?;
                let f = tape.sigmoid(f)?;
                let o = Self::lin(tape, pv, output, xh)?;
                let o = tape.sigmoid(o)?;
                let g = Self::lin(tape, pv, candidate, xh)?;
                let g = tape.tanh(g)?;
                let keep = tape.mul(f, st.c)?;
                let write = tape.mul(i, g)?;
                let c = tape.add(keep, write)?;
                let tc = tape.tanh(c)?;
                let h_new = tape.mul(o, tc)?;
                let h = tape.add(h_new, st.h)?;
                Ok(CellState { c, h })
            }
            Cell::Residual { first, second } => {
                let tc = tape.tanh(st.c)?;
                let xc = tape.concat(x, tc)?;
                let u = Self::lin(tape, pv, first, xc)?;
                let u = tape.relu(u)?;
                let out = Self::lin(tape, pv, second, u)?;
                let c = tape.add(out, st.c)?;
                Ok(CellState { c, h: c })
            }
        }
    }

    /// Records a forward pass on `tape`. `pv` are this network's registered
    /// parameters, `x` a `[B, input]` batch. Returns `[B, output]`.
    pub fn forward(&self, tape: &mut Tape, pv: &[Var], x: Var, steps: usize) -> Result<Var> {
        if steps == 0 {
            return Err(NetError::ZeroSteps);
        }
        let (rows, width) = tape.try_value(x)?.dims2("forward")?;
        if width != self.config.input {
            return Err(NetError::Width {
                expected: self.config.input,
                got: width,
            });
        }
        let hidden = self.config.hidden;
        match &self.body {
            Body::Recurrent {
                embed,
                norm,
                cells,
                head,
            } => {
                let e = Self::embed(tape, pv, *embed, *norm, x)?;
                let zero = tape.leaf(Tensor::zeros(&[rows, hidden]));
                let mut states = vec![CellState { c: zero, h: zero }; cells.len()];
                let mut last = zero;
                for _ in 0..steps {
                    let mut inp = e;
                    for (cell, st) in cells.iter().zip(states.iter_mut()) {
                        *st = Self::step_cell(tape, pv, cell, inp, *st)?;
                        inp = st.h;
                    }
                    last = inp;
                }
                let t = tape.tanh(last)?;
                Self::lin(tape, pv, *head, t)
            }
            Body::DeepRecursion {
                embed,
                norm,
                inner,
                outer,
                head,
            } => {
                let e = Self::embed(tape, pv, *embed, *norm, x)?;
                let zero = tape.leaf(Tensor::zeros(&[rows, hidden]));
                let mut z = CellState { c: zero, h: zero };
                let mut y = z;
                for i in 1..=steps {
                    let xin = tape.add(e, y.c)?;
                    z = Self::step_cell(tape, pv, inner, xin, z)?;
                    if i % DEEP_RECURSION_PERIOD == 0 || i == steps {
                        y = Self::step_cell(tape, pv, outer, z.c, y)?;
                    }
                }
                let t = tape.tanh(y.c)?;
                Self::lin(tape, pv, *head, t)
            }
            Body::Mlp { hidden, head } => {
                let mut h = x;
                for l in hidden {
                    let z = Self::lin(tape, pv, *l, h)?;
                    h = tape.relu(z)?;
                }
                Self::lin(tape, pv, *head, h)
            }
            Body::DeepResnet {
                embed,
                norm,
                blocks,
                head,
            } => {
                let mut h = Self::embed(tape, pv, *embed, *norm, x)?;
                for block in blocks {
                    let mut u = h;
                    for l in block {
                        u = tape.relu(u)?;
                        u = Self::lin(tape, pv, *l, u)?;
                    }
                    h = tape.add(h, u)?;
                }
                let t = tape.tanh(h)?;
                Self::lin(tape, pv, *head, t)
            }
        }
    }

    /// Forward pass without keeping the tape.
    pub fn infer(&self, x: &Tensor, steps: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let pv = self.register(&mut tape);
        let vx = tape.leaf(x.clone());
        let out = self.forward(&mut tape, &pv, vx, steps)?;
        Ok(tape.value(out).clone())
    }

    /// Closed-form multiply-accumulate count per sample at `steps` recurrent steps.
    pub fn count_flops(&self, steps: usize) -> FlopCount {
        match &self.body {
            Body::Recurrent {
                embed, cells, head, ..
            } => FlopCount {
                embed: embed.macs(),
                block: steps as u64 * cells.iter().map(Cell::macs).sum::<u64>(),
                head: head.macs(),
            },
            Body::DeepRecursion {
                embed,
                inner,
                outer,
                head,
                ..
            } => {
                let outer_updates = (1..=steps)
                    .filter(|i| i % DEEP_RECURSION_PERIOD == 0 || *i == steps)
                    .count() as u64;
                FlopCount {
                    embed: embed.macs(),
                    block: steps as u64 * inner.macs() + outer_updates * outer.macs(),
                    head: head.macs(),
                }
            }
            Body::Mlp { hidden, head } => FlopCount {
                embed: hidden[0].macs(),
                block: hidden[1..].iter().map(Linear::macs).sum(),
                head: head.macs(),
            },
            Body::DeepResnet {
                embed,
                blocks,
                head,
                ..
            } => FlopCount {
                embed: embed.macs(),
                block: blocks.iter().flatten().map(Linear::macs).sum(),
                head: head.macs(),
            },
        }
    }
}
