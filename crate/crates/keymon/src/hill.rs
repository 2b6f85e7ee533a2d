//! Hill cipher over the integers mod m: key validation, inversion,
//! block encryption/decryption, and the on-disk cipher-blob container.
//!
//! Two moduli are supported. Byte mode (m = 256) encrypts arbitrary
//! byte streams and is what the log pipeline uses. Letters mode
//! (m = 26) works over A-Z with case folding and exists for textbook
//! verification. Plaintext is padded with zero-valued symbols to a
//! whole number of blocks; the container records the true length so
//! decryption can strip the padding.
//!
//! No cryptographic strength is claimed: the Hill cipher is a classical
//! construction and is trivially broken by known-plaintext attacks.

use std::fmt;

use thiserror::Error;

/// Magic bytes opening the cipher-blob container layout.
pub const BLOB_MAGIC: [u8; 4] = *b"HCB1";
/// Cipher-blob header: magic, block size, modulus flag, original length.
pub const BLOB_HEADER_LEN: usize = 4 + 1 + 1 + 8;
pub const MIN_BLOCK_SIZE: usize = 2;
pub const MAX_BLOCK_SIZE: usize = 8;

#[derive(Debug, Error)]
pub enum HillError {
    #[error("block size {0} out of range {MIN_BLOCK_SIZE}..={MAX_BLOCK_SIZE}")]
    BadDimension(usize),
    #[error("key matrix row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("unsupported modulus {0} (expected 26 or 256)")]
    BadModulus(i64),
    #[error("key matrix is not invertible mod {modulus}: gcd(det mod m = {det}, {modulus}) != 1")]
    NonInvertible { det: i64, modulus: u32 },
    #[error("key matrix determinant is even ({det} mod 256); modulus 256 requires an odd determinant")]
    EvenDeterminant { det: i64 },
    #[error("byte {byte:#04x} at offset {offset} is not a letter; letters mode accepts only A-Z and a-z")]
    NonLetter { offset: usize, byte: u8 },
    #[error("{a} has no inverse mod {modulus}: gcd is {gcd}")]
    NotCoprime { a: i64, modulus: u32, gcd: i64 },
    #[error("blob parameters n={blob_n}, m={blob_m} do not match key n={key_n}, m={key_m}")]
    ParamMismatch {
        blob_n: usize,
        blob_m: u32,
        key_n: usize,
        key_m: u32,
    },
    #[error("cipher blob truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad cipher blob magic")]
    BadMagic,
    #[error("bad cipher blob modulus flag {0:#04x}")]
    BadModulusFlag(u8),
    #[error("cipher blob body of {body} bytes is not a multiple of block size {n}")]
    RaggedBody { body: usize, n: usize },
    #[error("cipher blob original length {original_len} inconsistent with {body}-byte body and block size {n}")]
    BadOriginalLen {
        original_len: u64,
        body: usize,
        n: usize,
    },
    #[error("ciphertext byte {byte:#04x} at offset {offset} is not an uppercase letter")]
    BadCipherSymbol { offset: usize, byte: u8 },
    #[error("key file line {line}: {msg}")]
    KeyFile { line: usize, msg: String },
}

/// The modulus the cipher works over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulus {
    /// m = 26, symbols A-Z.
    Letters,
    /// m = 256, symbols are raw bytes.
    Bytes,
}

impl Modulus {
    pub fn value(self) -> u32 {
        match self {
            Modulus::Letters => 26,
            Modulus::Bytes => 256,
        }
    }

    pub fn from_value(value: i64) -> Option<Modulus> {
        match value {
            26 => Some(Modulus::Letters),
            256 => Some(Modulus::Bytes),
            _ => None,
        }
    }

    fn flag(self) -> u8 {
        match self {
            Modulus::Letters => 0,
            Modulus::Bytes => 1,
        }
    }

    fn from_flag(flag: u8) -> Option<Modulus> {
        match flag {
            0 => Some(Modulus::Letters),
            1 => Some(Modulus::Bytes),
            _ => None,
        }
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

fn egcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = egcd(b, a.rem_euclid(b));
        (g, y, x - (a / b) * y)
    }
}

/// Modular inverse via the extended Euclidean algorithm: the x in
/// [0, m) with a*x = 1 (mod m).
pub fn mod_inverse(a: i64, modulus: u32) -> Result<u32, HillError> {
    let m = i64::from(modulus);
    let a = a.rem_euclid(m);
    let (g, x, _) = egcd(a, m);
    if g != 1 {
        return Err(HillError::NotCoprime {
            a,
            modulus,
            gcd: g,
        });
    }
    Ok(x.rem_euclid(m) as u32)
}

/// Exact integer determinant by fraction-free (Bareiss) elimination.
/// Entries up to 8x8 of values < 256 stay far inside i128 range.
fn determinant(rows: &[Vec<i128>]) -> i128 {
    let n = rows.len();
    let mut a: Vec<Vec<i128>> = rows.to_vec();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n.saturating_sub(1) {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&r| a[r][k] != 0) else {
                return 0;
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// An invertible n x n key matrix over the integers mod m.
///
/// Construction reduces every entry mod m and proves invertibility
/// (gcd(det mod m, m) = 1), so a `HillKey` value is always usable for
/// both encryption and decryption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HillKey {
    n: usize,
    modulus: Modulus,
    entries: Vec<u8>,
}

impl HillKey {
    /// Builds a key from integer rows, reducing entries mod m and
    /// verifying invertibility.
    pub fn new(rows: &[Vec<i64>], modulus: Modulus) -> Result<HillKey, HillError> {
        let n = rows.len();
        if !(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE).contains(&n) {
            return Err(HillError::BadDimension(n));
        }
        for (row, entries) in rows.iter().enumerate() {
            if entries.len() != n {
                return Err(HillError::NotSquare {
                    row: row + 1,
                    len: entries.len(),
                    n,
                });
            }
        }
        let m = i64::from(modulus.value());
        let entries: Vec<u8> = rows
            .iter()
            .flat_map(|row| row.iter().map(|&v| v.rem_euclid(m) as u8))
            .collect();
        let reduced: Vec<Vec<i128>> = entries
            .chunks(n)
            .map(|row| row.iter().map(|&v| i128::from(v)).collect())
            .collect();
        let det = determinant(&reduced);
        let det_mod = (det.rem_euclid(i128::from(m))) as i64;
        let (g, _, _) = egcd(det_mod, m);
        if g != 1 {
            if modulus == Modulus::Bytes && det_mod % 2 == 0 {
                return Err(HillError::EvenDeterminant { det: det_mod });
            }
            return Err(HillError::NonInvertible {
                det: det_mod,
                modulus: modulus.value(),
            });
        }
        Ok(HillKey { n, modulus, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    /// Entry at row i, column j, already reduced mod m.
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    /// Row-major reduced entries.
    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries
            .chunks(self.n)
            .map(|row| row.iter().map(|&v| i64::from(v)).collect())
            .collect()
    }

    /// The inverse key: `key * key.invert() = I (mod m)`. Cannot fail,
    /// since invertibility is a construction invariant.
    pub fn invert(&self) -> HillKey {
        let n = self.n;
        let m = i64::from(self.modulus.value());
        let rows: Vec<Vec<i128>> = self
            .entries
            .chunks(n)
            .map(|row| row.iter().map(|&v| i128::from(v)).collect())
            .collect();
        let det = determinant(&rows);
        let det_mod = det.rem_euclid(i128::from(m)) as i64;
        let det_inv =
            i128::from(mod_inverse(det_mod, self.modulus.value())
                .expect("HillKey invariant: determinant coprime to modulus"));
        let mut inverse = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                // Adjugate: cofactor of (j, i) lands at (i, j).
                let minor: Vec<Vec<i128>> = (0..n)
                    .filter(|&r| r != j)
                    .map(|r| {
                        (0..n)
                            .filter(|&c| c != i)
                            .map(|c| rows[r][c])
                            .collect()
                    })
                    .collect();
                let cofactor = if minor.is_empty() {
                    1
                } else {
                    determinant(&minor)
                };
                let signed = if (i + j) % 2 == 0 { cofactor } else { -cofactor };
                let value = (det_inv * signed).rem_euclid(i128::from(m));
                inverse[i * n + j] = value as u8;
            }
        }
        HillKey {
            n,
            modulus: self.modulus,
            entries: inverse,
        }
    }

    /// Parses the key file format: first line `n m`, then n lines of n
    /// space-separated integers. Blank lines and `#` comments are
    /// skipped.
    pub fn parse_key_file(text: &str) -> Result<HillKey, HillError> {
        let mut content = text.lines().enumerate().filter_map(|(idx, raw)| {
            let line = raw.trim();
            (!line.is_empty() && !line.starts_with('#')).then_some((idx + 1, line))
        });
        let (line_no, header) = content.next().ok_or(HillError::KeyFile {
            line: 1,
            msg: "missing `n m` header line".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(HillError::KeyFile {
                line: line_no,
                msg: format!("expected `n m`, found {} field(s)", fields.len()),
            });
        }
        let n: usize = fields[0].parse().map_err(|_| HillError::KeyFile {
            line: line_no,
            msg: format!("bad block size `{}`", fields[0]),
        })?;
        let m: i64 = fields[1].parse().map_err(|_| HillError::KeyFile {
            line: line_no,
            msg: format!("bad modulus `{}`", fields[1]),
        })?;
        let modulus = Modulus::from_value(m).ok_or(HillError::BadModulus(m))?;
        if !(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE).contains(&n) {
            return Err(HillError::BadDimension(n));
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let (line_no, line) = content.next().ok_or(HillError::KeyFile {
                line: text.lines().count().max(1),
                msg: format!("expected {n} matrix rows"),
            })?;
            let row: Result<Vec<i64>, _> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<i64>().map_err(|_| HillError::KeyFile {
                        line: line_no,
                        msg: format!("bad matrix entry `{tok}`"),
                    })
                })
                .collect();
            let row = row?;
            if row.len() != n {
                return Err(HillError::KeyFile {
                    line: line_no,
                    msg: format!("expected {n} entries, found {}", row.len()),
                });
            }
            rows.push(row);
        }
        if let Some((line_no, _)) = content.next() {
            return Err(HillError::KeyFile {
                line: line_no,
                msg: "unexpected content after matrix rows".into(),
            });
        }
        HillKey::new(&rows, modulus)
    }
}

/// Ciphertext container: parameters, true plaintext length, and the
/// ciphertext body (a whole number of blocks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherBlob {
    pub n: usize,
    pub modulus: Modulus,
    pub original_len: u64,
    pub body: Vec<u8>,
}

impl CipherBlob {
    /// Checks the structural invariants: body is a whole number of
    /// blocks and padding is minimal.
    pub fn validate(&self) -> Result<(), HillError> {
        if !(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE).contains(&self.n) {
            return Err(HillError::BadDimension(self.n));
        }
        if self.body.len() % self.n != 0 {
            return Err(HillError::RaggedBody {
                body: self.body.len(),
                n: self.n,
            });
        }
        let body = self.body.len() as u64;
        let max_pad = self.n as u64 - 1;
        if self.original_len > body || body - self.original_len > max_pad {
            return Err(HillError::BadOriginalLen {
                original_len: self.original_len,
                body: self.body.len(),
                n: self.n,
            });
        }
        Ok(())
    }

    /// Bit-exact container layout: `HCB1`, block size (1 byte), modulus
    /// flag (1 byte, 0 = 26 / 1 = 256), original length (8 bytes big
    /// endian), body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_HEADER_LEN + self.body.len());
        out.extend_from_slice(&BLOB_MAGIC);
        out.push(self.n as u8);
        out.push(self.modulus.flag());
        out.extend_from_slice(&self.original_len.to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses a container from a complete byte slice (the body runs to
    /// the end of the slice).
    pub fn from_bytes(bytes: &[u8]) -> Result<CipherBlob, HillError> {
        if bytes.len() < BLOB_HEADER_LEN {
            return Err(HillError::Truncated {
                need: BLOB_HEADER_LEN,
                have: bytes.len(),
            });
        }
        if bytes[..4] != BLOB_MAGIC {
            return Err(HillError::BadMagic);
        }
        let n = bytes[4] as usize;
        let modulus =
            Modulus::from_flag(bytes[5]).ok_or(HillError::BadModulusFlag(bytes[5]))?;
        let original_len = u64::from_be_bytes(bytes[6..14].try_into().unwrap());
        let blob = CipherBlob {
            n,
            modulus,
            original_len,
            body: bytes[BLOB_HEADER_LEN..].to_vec(),
        };
        blob.validate()?;
        Ok(blob)
    }
}

fn letter_symbol(byte: u8, offset: usize) -> Result<u8, HillError> {
    match byte {
        b'A'..=b'Z' => Ok(byte - b'A'),
        b'a'..=b'z' => Ok(byte - b'a'),
        _ => Err(HillError::NonLetter { offset, byte }),
    }
}

fn apply_key(key: &HillKey, symbols: &[u32]) -> Vec<u32> {
    let n = key.n();
    let m = u64::from(key.modulus().value());
    let mut out = Vec::with_capacity(symbols.len());
    for block in symbols.chunks(n) {
        for i in 0..n {
            let sum: u64 = (0..n)
                .map(|j| u64::from(key.entry(i, j)) * u64::from(block[j]))
                .sum();
            out.push((sum % m) as u32);
        }
    }
    out
}

/// Encrypts a byte sequence: plaintext symbols are padded with
/// zero-valued symbols to a whole number of blocks and each block p
/// becomes K*p mod m. In letters mode the input must be A-Z or a-z
/// (case folded) and the ciphertext body is uppercase letters; in byte
/// mode any input is accepted and the body is raw bytes.
pub fn encrypt(plaintext: &[u8], key: &HillKey) -> Result<CipherBlob, HillError> {
    let n = key.n();
    let mut symbols: Vec<u32> = match key.modulus() {
        Modulus::Letters => plaintext
            .iter()
            .enumerate()
            .map(|(offset, &byte)| letter_symbol(byte, offset).map(u32::from))
            .collect::<Result<_, _>>()?,
        Modulus::Bytes => plaintext.iter().map(|&b| u32::from(b)).collect(),
    };
    let rem = symbols.len() % n;
    if rem != 0 {
        symbols.resize(symbols.len() + (n - rem), 0);
    }
    let cipher_symbols = apply_key(key, &symbols);
    let body: Vec<u8> = match key.modulus() {
        Modulus::Letters => cipher_symbols.iter().map(|&s| s as u8 + b'A').collect(),
        Modulus::Bytes => cipher_symbols.iter().map(|&s| s as u8).collect(),
    };
    Ok(CipherBlob {
        n,
        modulus: key.modulus(),
        original_len: plaintext.len() as u64,
        body,
    })
}

/// Decrypts a blob with the inverse of `key`, strips the padding, and
/// returns the plaintext. The blob's parameters must match the key's.
pub fn decrypt(blob: &CipherBlob, key: &HillKey) -> Result<Vec<u8>, HillError> {
    if blob.n != key.n() || blob.modulus != key.modulus() {
        return Err(HillError::ParamMismatch {
            blob_n: blob.n,
            blob_m: blob.modulus.value(),
            key_n: key.n(),
            key_m: key.modulus().value(),
        });
    }
    blob.validate()?;
    let symbols: Vec<u32> = match blob.modulus {
        Modulus::Letters => blob
            .body
            .iter()
            .enumerate()
            .map(|(offset, &byte)| match byte {
                b'A'..=b'Z' => Ok(u32::from(byte - b'A')),
                _ => Err(HillError::BadCipherSymbol { offset, byte }),
            })
            .collect::<Result<_, _>>()?,
        Modulus::Bytes => blob.body.iter().map(|&b| u32::from(b)).collect(),
    };
    let plain_symbols = apply_key(&key.invert(), &symbols);
    let mut plain: Vec<u8> = match blob.modulus {
        Modulus::Letters => plain_symbols.iter().map(|&s| s as u8 + b'A').collect(),
        Modulus::Bytes => plain_symbols.iter().map(|&s| s as u8).collect(),
    };
    plain.truncate(blob.original_len as usize);
    Ok(plain)
}
