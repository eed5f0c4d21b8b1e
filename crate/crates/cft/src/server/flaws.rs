//! The seeded-flaw catalog. Each flaw is an individually toggleable
//! behavior of the reference server; all six on models the legacy,
//! vulnerable build, all off the hardened release.

use serde::{Deserialize, Serialize};

/// One seeded vulnerability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flaw {
    /// Filenames are joined to the sandbox root naively; `..` and absolute
    /// paths escape.
    F1PathTraversal,
    /// DATA longer than the negotiated block size "overruns" into a
    /// simulated adjacent-memory region: up to 64 leaked bytes in the
    /// reply, a session abort past 256 bytes of overrun.
    F2OverrunLeak,
    /// The declared length field is trusted blindly: reads run into the
    /// next frame's bytes, short reads at timeout/EOF are processed
    /// anyway, and frame integrity (checksum) is never verified.
    F3LengthSmearing,
    /// `file_size` and `declared_length` are treated as signed 32-bit:
    /// values >= 0x80000000 skip the maximum-size bound check, and a zero
    /// block size hits a block-count division fault.
    F4SignedConfusion,
    /// Protocol sequence rules are not enforced. Out-of-order DATA lands
    /// in a stale buffer pool retained across sessions and the reply
    /// echoes the previous occupant's bytes.
    F5SequenceLax,
    /// Unknown opcodes answer with an internal debug dump instead of an
    /// error.
    F6DebugDisclosure,
}

pub const ALL_FLAWS: [Flaw; 6] = [
    Flaw::F1PathTraversal,
    Flaw::F2OverrunLeak,
    Flaw::F3LengthSmearing,
    Flaw::F4SignedConfusion,
    Flaw::F5SequenceLax,
    Flaw::F6DebugDisclosure,
];

impl Flaw {
    pub fn label(&self) -> &'static str {
        match self {
            Flaw::F1PathTraversal => "F1",
            Flaw::F2OverrunLeak => "F2",
            Flaw::F3LengthSmearing => "F3",
            Flaw::F4SignedConfusion => "F4",
            Flaw::F5SequenceLax => "F5",
            Flaw::F6DebugDisclosure => "F6",
        }
    }

    pub fn parse(s: &str) -> Option<Flaw> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F1" => Some(Flaw::F1PathTraversal),
            "F2" => Some(Flaw::F2OverrunLeak),
            "F3" => Some(Flaw::F3LengthSmearing),
            "F4" => Some(Flaw::F4SignedConfusion),
            "F5" => Some(Flaw::F5SequenceLax),
            "F6" => Some(Flaw::F6DebugDisclosure),
            _ => None,
        }
    }
}

impl std::fmt::Display for Flaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which seeded flaws a server instance exhibits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlawSet {
    pub f1_path_traversal: bool,
    pub f2_overrun_leak: bool,
    pub f3_length_smearing: bool,
    pub f4_signed_confusion: bool,
    pub f5_sequence_lax: bool,
    pub f6_debug_disclosure: bool,
}

impl FlawSet {
    /// All flaws off: the hardened release.
    pub const HARDENED: FlawSet = FlawSet {
        f1_path_traversal: false,
        f2_overrun_leak: false,
        f3_length_smearing: false,
        f4_signed_confusion: false,
        f5_sequence_lax: false,
        f6_debug_disclosure: false,
    };

    /// All flaws on: the legacy, vulnerable build.
    pub const VULNERABLE: FlawSet = FlawSet {
        f1_path_traversal: true,
        f2_overrun_leak: true,
        f3_length_smearing: true,
        f4_signed_confusion: true,
        f5_sequence_lax: true,
        f6_debug_disclosure: true,
    };

    pub fn single(flaw: Flaw) -> FlawSet {
        let mut set = FlawSet::HARDENED;
        set.set(flaw, true);
        set
    }

    pub fn set(&mut self, flaw: Flaw, on: bool) {
        match flaw {
            Flaw::F1PathTraversal => self.f1_path_traversal = on,
            Flaw::F2OverrunLeak => self.f2_overrun_leak = on,
            Flaw::F3LengthSmearing => self.f3_length_smearing = on,
            Flaw::F4SignedConfusion => self.f4_signed_confusion = on,
            Flaw::F5SequenceLax => self.f5_sequence_lax = on,
            Flaw::F6DebugDisclosure => self.f6_debug_disclosure = on,
        }
    }

    pub fn enabled(&self, flaw: Flaw) -> bool {
        match flaw {
            Flaw::F1PathTraversal => self.f1_path_traversal,
            Flaw::F2OverrunLeak => self.f2_overrun_leak,
            Flaw::F3LengthSmearing => self.f3_length_smearing,
            Flaw::F4SignedConfusion => self.f4_signed_confusion,
            Flaw::F5SequenceLax => self.f5_sequence_lax,
            Flaw::F6DebugDisclosure => self.f6_debug_disclosure,
        }
    }

    pub fn iter_enabled(&self) -> impl Iterator<Item = Flaw> + '_ {
        ALL_FLAWS.into_iter().filter(|f| self.enabled(*f))
    }

    /// Parse `"all"`, `"none"`, or a comma list like `"F1,F4"`.
    pub fn parse(s: &str) -> Result<FlawSet, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => return Ok(FlawSet::VULNERABLE),
            "none" | "" => return Ok(FlawSet::HARDENED),
            _ => {}
        }
        let mut set = FlawSet::HARDENED;
        for part in s.split(',') {
            let flaw = Flaw::parse(part)
                .ok_or_else(|| format!("unknown flaw {part:?} (want F1..F6, all, or none)"))?;
            set.set(flaw, true);
        }
        Ok(set)
    }
}

impl std::fmt::Display for FlawSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == FlawSet::HARDENED {
            return f.write_str("none");
        }
        if *self == FlawSet::VULNERABLE {
            return f.write_str("all");
        }
        let labels: Vec<&str> = self.iter_enabled().map(|fl| fl.label()).collect();
        f.write_str(&labels.join(","))
    }
}
