use std::fmt;
use std::str::FromStr;

use super::NetError;

/// What sits inside the recurrent loop (or which baseline replaces it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Iru,
    Lstm,
    ResnetBlock,
    IruDeepRecursion,
    Mlp,
    DeepResnet,
}

impl BlockKind {
    pub const ALL: [BlockKind; 6] = [
        BlockKind::Iru,
        BlockKind::Lstm,
        BlockKind::ResnetBlock,
        BlockKind::IruDeepRecursion,
        BlockKind::Mlp,
        BlockKind::DeepResnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Iru => "iru",
            BlockKind::Lstm => "lstm",
            BlockKind::ResnetBlock => "resnet-block",
            BlockKind::IruDeepRecursion => "iru-deep-recursion",
            BlockKind::Mlp => "mlp",
            BlockKind::DeepResnet => "deep-resnet",
        }
    }

    /// Whether the recurrent step count changes the computation.
    pub fn is_recurrent(self) -> bool {
        !matches!(self, BlockKind::Mlp | BlockKind::DeepResnet)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| NetError::UnknownKind(s.to_string()))
    }
}

/// Shape of a network. `layers` is the number of stacked recurrent layers per
/// block for recurrent kinds, the hidden layer count for `mlp`, and the
/// hidden layers per residual block for `deep-resnet`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub kind: BlockKind,
    pub input: usize,
    pub output: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Residual blocks (`deep-resnet` only).
    pub blocks: usize,
    /// Default recurrent step count N.
    pub steps: usize,
}

impl ArchConfig {
    pub fn iru(input: usize, output: usize, hidden: usize, layers: usize, steps: usize) -> Self {
        Self {
            kind: BlockKind::Iru,
            input,
            output,
            hidden,
            layers,
            blocks: 0,
            steps,
        }
    }

    pub fn mlp(input: usize, output: usize, hidden: usize, layers: usize) -> Self {
        Self {
            kind: BlockKind::Mlp,
            input,
            output,
            hidden,
            layers,
            blocks: 0,
            steps: 1,
        }
    }

    pub fn deep_resnet(input: usize, output: usize, hidden: usize, blocks: usize, layers: usize) -> Self {
        Self {
            kind: BlockKind::DeepResnet,
            input,
            output,
            hidden,
            layers,
            blocks,
            steps: 1,
        }
    }

    pub fn with_kind(mut self, kind: BlockKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_output(mut self, output: usize) -> Self {
        self.output = output;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.steps == 0 {
            return Err(NetError::ZeroSteps);
        }
        if self.hidden == 0 || self.input == 0 || self.output == 0 {
            return bad("input, output and hidden widths must be positive");
        }
        match self.kind {
            BlockKind::Mlp if self.layers == 0 => bad("mlp needs at least one hidden layer"),
            BlockKind::DeepResnet if self.blocks == 0 || self.layers == 0 => {
                bad("deep-resnet needs at least one block with one hidden layer")
            }
            BlockKind::Iru | BlockKind::Lstm | BlockKind::ResnetBlock if !(1..=2).contains(&self.layers) => {
                bad("recurrent blocks stack 1 or 2 layers")
            }
            BlockKind::IruDeepRecursion if self.layers != 1 => {
                bad("deep recursion uses a single layer per latent")
            }
            _ => Ok(()),
        }
    }
}
