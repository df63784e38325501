//! Checkpoint files.
//!
//! ```text
//! 8 bytes  magic "V2VAOICK"
//! u32      format version
//! u64      architecture digest
//! u64      episodes completed
//! u32      number of links
//! u8       shared-actor flag
//! u8       graph-embedding flag
//! 32 bytes action-sampling generator seed
//! u64      generator stream
//! u128     generator word position
//! tensor block (see `nn::write_tensors`)
//! ```
//!
//! Tensors are `actor{k}.*`, `gnn.*` and, optionally, `critic.*` plus
//! `critic.value_norm`. Integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::actor::{ActorParams, TRUNK_WIDTH};
use super::critic::{CriticParams, ValueNormalizer, GLOBAL_WIDTH, GNN_CODE, LOCAL_CODE};
use super::PolicyParams;
use crate::env::STATE_DIM;
use crate::error::CheckpointError;
use crate::nn::tensor_io::{read_u32, read_u64};
use crate::nn::{read_tensors, write_tensors, NamedTensor, Parameters};
use crate::sage::{SageParams, FEATURE_DIM, HIDDEN_DIM};

const MAGIC: &[u8; 8] = b"V2VAOICK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Fingerprint of everything that fixes tensor shapes and their meaning.
/// Packet length, arrival rate and channel constants are deliberately left
/// out so that one trained policy can be evaluated across those sweeps.
pub fn architecture_digest(links: usize, shared_actor: bool, use_gnn: bool) -> u64 {
    let text = format!(
        "links={links};shared_actor={shared_actor};use_gnn={use_gnn};state={STATE_DIM};trunk={TRUNK_WIDTH};\
         features={FEATURE_DIM};hidden={HIDDEN_DIM};critic={GNN_CODE},{LOCAL_CODE},{GLOBAL_WIDTH}"
    );
    let hash = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(hash[..8].try_into().expect("sha256 yields 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub links: usize,
    pub episode: u64,
    pub rng: ChaCha8Rng,
    pub policy: PolicyParams,
    pub critic: Option<(CriticParams, ValueNormalizer)>,
}

impl Checkpoint {
    pub fn digest(&self) -> u64 {
        architecture_digest(self.links, self.policy.shared_actor, self.policy.use_gnn)
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&ckpt.digest().to_le_bytes())?;
        w.write_all(&ckpt.episode.to_le_bytes())?;
        w.write_all(&(ckpt.links as u32).to_le_bytes())?;
        w.write_all(&[u8::from(ckpt.policy.shared_actor), u8::from(ckpt.policy.use_gnn)])?;
        w.write_all(&ckpt.rng.get_seed())?;
        w.write_all(&ckpt.rng.get_stream().to_le_bytes())?;
        w.write_all(&ckpt.rng.get_word_pos().to_le_bytes())?;

        let mut tensors: Vec<NamedTensor> = Vec::new();
        for (k, a) in ckpt.policy.actors.iter().enumerate() {
            tensors.extend(a.named_tensors(&format!("actor{k}.")));
        }
        tensors.extend(ckpt.policy.gnn.named_tensors("gnn."));
        if let Some((critic, norm)) = &ckpt.critic {
            tensors.extend(critic.named_tensors("critic."));
            let mut t = norm.to_tensor();
            t.name = format!("critic.{}", t.name);
            tensors.push(t);
        }
        write_tensors(&mut w, &tensors)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint and checks its digest against `expected_digest`.
/// Critic tensors are only read when `with_critic` is set; otherwise their
/// presence or absence has no effect on the result.
pub fn load(path: &Path, expected_digest: u64, with_critic: bool) -> Result<Checkpoint, CheckpointError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CheckpointError::NotFound(path.to_path_buf()),
        _ => CheckpointError::Io(e),
    })?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported checkpoint version {version}")));
    }
    let digest = read_u64(&mut r)?;
    if digest != expected_digest {
        return Err(CheckpointError::DigestMismatch { expected: expected_digest, found: digest });
    }
    let episode = read_u64(&mut r)?;
    let links = read_u32(&mut r)? as usize;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let (shared_actor, use_gnn) = (flags[0] != 0, flags[1] != 0);
    if architecture_digest(links, shared_actor, use_gnn) != digest {
        return Err(CheckpointError::Format("header fields disagree with the digest".into()));
    }
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let stream = read_u64(&mut r)?;
    let mut word_pos = [0u8; 16];
    r.read_exact(&mut word_pos)?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from_le_bytes(word_pos));

    let tensors = read_tensors(&mut r)?;
    let count = if shared_actor { 1 } else { links };
    let mut actors = Vec::with_capacity(count);
    for k in 0..count {
        let mut a = ActorParams::zeros();
        a.load_named(&format!("actor{k}."), &tensors)?;
        actors.push(a);
    }
    let mut gnn = SageParams::zeros();
    gnn.load_named("gnn.", &tensors)?;
    let critic = if with_critic {
        let mut c = CriticParams::zeros(links);
        c.load_named("critic.", &tensors)?;
        let name = format!("critic.{}", ValueNormalizer::TENSOR);
        let t = tensors.iter().find(|t| t.name == name).ok_or(CheckpointError::MissingTensor(name))?;
        Some((c, ValueNormalizer::from_tensor(t)?))
    } else {
        None
    };
    Ok(Checkpoint { links, episode, rng, policy: PolicyParams { actors, gnn, shared_actor, use_gnn }, critic })
}
