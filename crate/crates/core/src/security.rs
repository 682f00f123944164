//! Security identifiers, privilege masks, and the two-layer access check.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sid(pub [u8; 16]);

impl Sid {
    /// The well-known identity that permissive hosts grant everything to.
    pub const ANONYMOUS: Sid = Sid([0; 16]);

    pub fn generate(rng: &mut impl RngCore) -> Sid {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Sid(b)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sid({})", self.to_hex())
    }
}

impl fmt::Display for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseSecurityError {
    #[error("SID must be 32 hex digits")]
    BadSid,
    #[error("bad privilege mask '{0}'")]
    BadMask(String),
    #[error("expected 'sid-hex:mask', found '{0}'")]
    BadEntry(String),
}

impl FromStr for Sid {
    type Err = ParseSecurityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s.trim()).map_err(|_| ParseSecurityError::BadSid)?;
        let arr: [u8; 16] = bytes.try_into().map_err(|_| ParseSecurityError::BadSid)?;
        Ok(Sid(arr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Privilege {
    Read = 0,
    Write = 1,
    Create = 2,
    Exec = 3,
    Admin = 4,
}

impl Privilege {
    pub const ALL: [Privilege; 5] = [Privilege::Read, Privilege::Write, Privilege::Create, Privilege::Exec, Privilege::Admin];

    pub fn bit(self) -> u8 {
        1 << self as u8
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct PrivilegeMask(u8);

impl PrivilegeMask {
    pub const NONE: PrivilegeMask = PrivilegeMask(0);
    pub const ALL: PrivilegeMask = PrivilegeMask(0x1f);

    /// Rejects masks with bits above ADMIN set.
    pub fn new(bits: u8) -> Option<PrivilegeMask> {
        (bits & !0x1f == 0).then_some(PrivilegeMask(bits))
    }

    pub fn of(privs: &[Privilege]) -> PrivilegeMask {
        PrivilegeMask(privs.iter().fold(0, |m, p| m | p.bit()))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// ADMIN implies every other privilege.
    pub fn grants(self, p: Privilege) -> bool {
        self.0 & Privilege::Admin.bit() != 0 || self.0 & p.bit() != 0
    }

    pub fn union(self, other: PrivilegeMask) -> PrivilegeMask {
        PrivilegeMask(self.0 | other.0)
    }
}

impl fmt::Debug for PrivilegeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["READ", "WRITE", "CREATE", "EXEC", "ADMIN"];
        let set: Vec<&str> = (0..5).filter(|i| self.0 & (1 << i) != 0).map(|i| names[i]).collect();
        write!(f, "{}", if set.is_empty() { "NONE".to_string() } else { set.join("|") })
    }
}

impl FromStr for PrivilegeMask {
    type Err = ParseSecurityError;

    /// Accepts a number (`0x1f`, `31`, `0b11111`) or names joined with `|`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParseSecurityError::BadMask(s.to_string());
        let numeric = if let Some(h) = s.strip_prefix("0x") {
            Some(u8::from_str_radix(h, 16))
        } else if let Some(b) = s.strip_prefix("0b") {
            Some(u8::from_str_radix(b, 2))
        } else if s.chars().all(|c| c.is_ascii_digit()) && !s.is_empty() {
            Some(s.parse::<u8>())
        } else {
            None
        };
        if let Some(n) = numeric {
            return n.ok().and_then(PrivilegeMask::new).ok_or_else(bad);
        }
        let mut m = 0u8;
        for part in s.split('|') {
            m |= match part.trim().to_ascii_uppercase().as_str() {
                "READ" => Privilege::Read.bit(),
                "WRITE" => Privilege::Write.bit(),
                "CREATE" => Privilege::Create.bit(),
                "EXEC" => Privilege::Exec.bit(),
                "ADMIN" => Privilege::Admin.bit(),
                "ALL" => 0x1f,
                _ => return Err(bad()),
            };
        }
        Ok(PrivilegeMask(m))
    }
}

/// Set of (Sid, mask) pairs with at most one pair per Sid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CredentialSet {
    pairs: Vec<(Sid, PrivilegeMask)>,
}

impl CredentialSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Grants everything to the anonymous Sid.
    pub fn permissive() -> Self {
        let mut c = Self::new();
        c.grant(Sid::ANONYMOUS, PrivilegeMask::ALL);
        c
    }

    /// Adds privileges; a second grant to one Sid merges into its mask.
    pub fn grant(&mut self, sid: Sid, mask: PrivilegeMask) {
        match self.pairs.iter_mut().find(|(s, _)| *s == sid) {
            Some((_, m)) => *m = m.union(mask),
            None => {
                self.pairs.push((sid, mask));
                self.pairs.sort();
            }
        }
    }

    pub fn mask_of(&self, sid: &Sid) -> PrivilegeMask {
        self.pairs.iter().find(|(s, _)| s == sid).map(|(_, m)| *m).unwrap_or_default()
    }

    pub fn sids(&self) -> Vec<Sid> {
        self.pairs.iter().map(|(s, _)| *s).collect()
    }

    pub fn pairs(&self) -> &[(Sid, PrivilegeMask)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Whether some Sid in `sids` holds `p` here.
    pub fn grants_any(&self, sids: &[Sid], p: Privilege) -> bool {
        sids.iter().any(|s| self.mask_of(s).grants(p))
    }

    /// Parses one `sid-hex:mask` line.
    pub fn parse_entry(line: &str) -> Result<(Sid, PrivilegeMask), ParseSecurityError> {
        let (sid, mask) = line.split_once(':').ok_or_else(|| ParseSecurityError::BadEntry(line.to_string()))?;
        Ok((sid.parse()?, mask.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Host,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Allow,
    Deny(Layer),
}

/// Allows iff the host map grants `op` to some Sid the request carries, and the
/// object ACL, when present, does too. The host layer is consulted first.
pub fn check_access(queue_sids: &[Sid], object_acl: Option<&CredentialSet>, host_map: &CredentialSet, op: Privilege) -> Access {
    if !host_map.grants_any(queue_sids, op) {
        return Access::Deny(Layer::Host);
    }
    match object_acl {
        Some(acl) if !acl.grants_any(queue_sids, op) => Access::Deny(Layer::Object),
        _ => Access::Allow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sid(b: u8) -> Sid {
        Sid([b; 16])
    }

    #[test]
    fn permissive_default_allows() {
        let hm = CredentialSet::permissive();
        assert_eq!(check_access(&[Sid::ANONYMOUS], None, &hm, Privilege::Exec), Access::Allow);
    }

    #[test]
    fn acl_read_only_denies_exec_at_object_layer() {
        let hm = CredentialSet::permissive();
        let mut acl = CredentialSet::new();
        acl.grant(Sid::ANONYMOUS, PrivilegeMask::of(&[Privilege::Read]));
        assert_eq!(check_access(&[Sid::ANONYMOUS], Some(&acl), &hm, Privilege::Exec), Access::Deny(Layer::Object));
    }

    #[test]
    fn lockdown_denies_everything_at_host_layer() {
        let hm = CredentialSet::new();
        for p in Privilege::ALL {
            assert_eq!(check_access(&[sid(1)], None, &hm, p), Access::Deny(Layer::Host));
        }
    }

    /// Exhaustive truth table over one Sid: every host mask, every ACL mask or
    /// absence, every op, against a direct reading of the rule.
    #[test]
    fn truth_table() {
        let s = sid(9);
        for hbits in 0u8..32 {
            for abits in (0u8..32).map(Some).chain([None]) {
                for op in Privilege::ALL {
                    let mut hm = CredentialSet::new();
                    hm.grant(s, PrivilegeMask::new(hbits).unwrap());
                    let acl = abits.map(|a| {
                        let mut c = CredentialSet::new();
                        c.grant(s, PrivilegeMask::new(a).unwrap());
                        c
                    });
                    let admin = 1 << 4;
                    let host_ok = hbits & admin != 0 || hbits & (1 << op as u8) != 0;
                    let obj_ok = abits.is_none_or(|a| a & admin != 0 || a & (1 << op as u8) != 0);
                    let expect = if !host_ok {
                        Access::Deny(Layer::Host)
                    } else if !obj_ok {
                        Access::Deny(Layer::Object)
                    } else {
                        Access::Allow
                    };
                    assert_eq!(check_access(&[s], acl.as_ref(), &hm, op), expect, "h={hbits:05b} a={abits:?} op={op:?}");
                }
            }
        }
    }

    #[test]
    fn parse_entries() {
        let (s, m) = CredentialSet::parse_entry("0102030405060708090a0b0c0d0e0f10:CREATE|EXEC").unwrap();
        assert_eq!(s.0[0], 1);
        assert_eq!(m, PrivilegeMask::of(&[Privilege::Create, Privilege::Exec]));
        assert_eq!(CredentialSet::parse_entry("00000000000000000000000000000000:0x1f").unwrap().1, PrivilegeMask::ALL);
        assert!(CredentialSet::parse_entry("0000:1").is_err());
        assert!("0x20".parse::<PrivilegeMask>().is_err());
    }

    fn creds() -> impl Strategy<Value = Vec<(u8, u8)>> {
        proptest::collection::vec((0u8..4, 0u8..32), 0..6)
    }

    fn build(v: &[(u8, u8)]) -> CredentialSet {
        let mut c = CredentialSet::new();
        for (s, m) in v {
            c.grant(sid(*s), PrivilegeMask::new(*m).unwrap());
        }
        c
    }

    proptest! {
        #[test]
        fn adding_a_grant_never_revokes(
            host in creds(), acl in proptest::option::of(creds()), q in proptest::collection::vec(0u8..4, 0..4),
            extra in (0u8..4, 0u8..32), to_host in any::<bool>(), op in 0usize..5,
        ) {
            let op = Privilege::ALL[op];
            let sids: Vec<Sid> = q.iter().map(|b| sid(*b)).collect();
            let hm = build(&host);
            let am = acl.as_ref().map(|a| build(a));
            let before = check_access(&sids, am.as_ref(), &hm, op);
            let (mut hm2, mut am2) = (hm.clone(), am.clone());
            let extra_mask = PrivilegeMask::new(extra.1).unwrap();
            if to_host { hm2.grant(sid(extra.0), extra_mask) } else if let Some(a) = am2.as_mut() { a.grant(sid(extra.0), extra_mask) }
            let after = check_access(&sids, am2.as_ref(), &hm2, op);
            if before == Access::Allow { prop_assert_eq!(after, Access::Allow); }
        }

        #[test]
        fn host_refusal_wins_regardless_of_acl(host in creds(), acl in proptest::option::of(creds()), q in proptest::collection::vec(0u8..4, 0..4), op in 0usize..5) {
            let op = Privilege::ALL[op];
            let sids: Vec<Sid> = q.iter().map(|b| sid(*b)).collect();
            let hm = build(&host);
            if !hm.grants_any(&sids, op) {
                let am = acl.as_ref().map(|a| build(a));
                prop_assert_eq!(check_access(&sids, am.as_ref(), &hm, op), Access::Deny(Layer::Host));
            }
        }
    }
}
