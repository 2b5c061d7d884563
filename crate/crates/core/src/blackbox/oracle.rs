//! Line-based prediction-oracle protocol over a child process's stdio.
//!
//! ```text
//! -> HELLO m=<m> c=<C>
//! <- READY
//! -> BATCH <n>
//! -> <x1>,<x2>,...,<xm>      (n lines)
//! <- <category>              (n lines, 1-based)
//! ```
//!
//! A bare instance line without `BATCH` framing is answered with a single
//! label line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::Classifier;
use crate::data::Category;
use crate::error::{Error, Result};

pub const DEFAULT_ORACLE_TIMEOUT: Duration = Duration::from_secs(30);

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Connection {
    fn read_line(&self, timeout: Duration) -> std::result::Result<String, String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line.trim_end_matches('\r').to_owned()),
            Ok(Err(e)) => Err(format!("read error: {e}")),
            Err(RecvTimeoutError::Timeout) => Err(format!("no reply within {timeout:?}")),
            Err(RecvTimeoutError::Disconnected) => Err("oracle closed its output".into()),
        }
    }
}

/// Client side of the protocol. Access is serialized per connection.
pub struct OracleClient {
    conn: Mutex<Connection>,
    command: Vec<String>,
    input_dim: usize,
    num_categories: usize,
    timeout: Duration,
}

impl std::fmt::Debug for OracleClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleClient")
            .field("command", &self.command)
            .field("input_dim", &self.input_dim)
            .field("num_categories", &self.num_categories)
            .finish()
    }
}

/// Spawns `command` (program followed by its arguments) and performs the
/// handshake.
pub fn connect_oracle(
    command: &[String],
    input_dim: usize,
    num_categories: usize,
    timeout: Duration,
) -> Result<OracleClient> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::SpawnFailure("empty command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::SpawnFailure(format!("{program}: {e}")))?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    let mut conn = Connection {
        child,
        stdin,
        lines: rx,
    };
    let hello = format!("HELLO m={input_dim} c={num_categories}\n");
    if let Err(e) = conn
        .stdin
        .write_all(hello.as_bytes())
        .and_then(|_| conn.stdin.flush())
    {
        let _ = conn.child.kill();
        return Err(Error::HandshakeFailure(format!("writing HELLO: {e}")));
    }
    match conn.read_line(timeout) {
        Ok(reply) if reply == "READY" => {}
        Ok(reply) => {
            let _ = conn.child.kill();
            return Err(Error::HandshakeFailure(format!(
                "expected READY, got {reply:?}"
            )));
        }
        Err(e) => {
            let _ = conn.child.kill();
            return Err(Error::HandshakeFailure(e));
        }
    }
    Ok(OracleClient {
        conn: Mutex::new(conn),
        command: command.to_vec(),
        input_dim,
        num_categories,
        timeout,
    })
}

/// Formats one instance as decimal reals joined by single commas.
pub fn format_row(row: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&v.to_string());
    }
    out
}

fn parse_row(line: &str, m: usize) -> std::result::Result<Vec<f64>, String> {
    let values: std::result::Result<Vec<f64>, _> =
        line.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| format!("bad instance line {line:?}: {e}"))?;
    if values.len() != m {
        return Err(format!("expected {m} values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite value in {line:?}"));
    }
    Ok(values)
}

impl Classifier for OracleClient {
    fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| Error::OracleFailure("connection poisoned".into()))?;
        let mut request = format!("BATCH {}\n", rows.len());
        for row in rows {
            if row.len() != self.input_dim {
                return Err(Error::Schema(format!(
                    "row of length {} for an oracle over {} attributes",
                    row.len(),
                    self.input_dim
                )));
            }
            request.push_str(&format_row(row));
            request.push('\n');
        }
        conn.stdin
            .write_all(request.as_bytes())
            .and_then(|_| conn.stdin.flush())
            .map_err(|e| Error::OracleFailure(format!("writing request: {e}")))?;
        let mut labels = Vec::with_capacity(rows.len());
        for _ in 0..rows.len() {
            let line = conn.read_line(self.timeout).map_err(Error::OracleFailure)?;
            let label: usize = line
                .trim()
                .parse()
                .map_err(|_| Error::OracleFailure(format!("malformed reply {line:?}")))?;
            if label == 0 || label > self.num_categories {
                return Err(Error::OracleFailure(format!(
                    "category {label} outside 1..={}",
                    self.num_categories
                )));
            }
            labels.push(Category(label));
        }
        Ok(labels)
    }

    fn descriptor(&self) -> String {
        format!("oracle({})", self.command.join(" "))
    }
}

impl Drop for OracleClient {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            let _ = conn.child.kill();
            let _ = conn.child.wait();
        }
    }
}

/// Server side: answers protocol requests on `input`/`output` using `model`
/// until end of input.
pub fn serve_oracle<R: BufRead, W: Write>(
    model: &dyn Classifier,
    input: R,
    mut output: W,
) -> Result<()> {
    let fail = |msg: String| Error::OracleFailure(msg);
    let io_err = |e: std::io::Error| Error::OracleFailure(format!("io: {e}"));
    let mut lines = input.lines();
    let hello = match lines.next() {
        Some(line) => line.map_err(io_err)?,
        None => return Ok(()),
    };
    let expected = format!("HELLO m={} c={}", model.input_dim(), model.num_categories());
    if hello.trim() != expected {
        writeln!(output, "ERROR expected {expected:?}").map_err(io_err)?;
        output.flush().map_err(io_err)?;
        return Err(fail(format!("bad handshake {hello:?}")));
    }
    writeln!(output, "READY").map_err(io_err)?;
    output.flush().map_err(io_err)?;

    let m = model.input_dim();
    while let Some(line) = lines.next() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rows = if let Some(count) = line.strip_prefix("BATCH ") {
            let n: usize = count
                .trim()
                .parse()
                .map_err(|_| fail(format!("bad batch header {line:?}")))?;
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let row = lines
                    .next()
                    .ok_or_else(|| fail("input ended inside a batch".into()))?
                    .map_err(io_err)?;
                rows.push(parse_row(&row, m).map_err(fail)?);
            }
            rows
        } else {
            vec![parse_row(line, m).map_err(fail)?]
        };
        let labels = model.predict(&rows)?;
        let mut reply = String::with_capacity(labels.len() * 3);
        for l in labels {
            reply.push_str(&l.0.to_string());
            reply.push('\n');
        }
        output.write_all(reply.as_bytes()).map_err(io_err)?;
        output.flush().map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::ConstantModel;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    const ECHO_ONE: &str = r#"read hello; echo READY
while read line; do
  case "$line" in
    BATCH*) n=${line#BATCH }; i=0
            while [ $i -lt $n ]; do read row; echo 1; i=$((i+1)); done ;;
    *) echo 1 ;;
  esac
done"#;

    #[test]
    fn stub_oracle_is_constant_model() {
        let client = connect_oracle(&sh(ECHO_ONE), 2, 3, DEFAULT_ORACLE_TIMEOUT).unwrap();
        let rows = vec![vec![0.5, 1.0], vec![-3.0, 2.25], vec![0.5, 1.0]];
        assert_eq!(client.predict(&rows).unwrap(), vec![Category(1); 3]);
        assert!(client.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn exiting_command_fails_handshake() {
        let err = connect_oracle(&sh("exit 0"), 2, 2, Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, Error::HandshakeFailure(_)), "{err}");
    }

    #[test]
    fn missing_program_fails_spawn() {
        let err = connect_oracle(
            &["/nonexistent/oracle-binary".to_string()],
            1,
            2,
            DEFAULT_ORACLE_TIMEOUT,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SpawnFailure(_)), "{err}");
    }

    #[test]
    fn out_of_range_reply_is_failure() {
        let script =
            "read h; echo READY; while read l; do case \"$l\" in BATCH*) ;; *) echo 9;; esac; done";
        let client = connect_oracle(&sh(script), 1, 2, Duration::from_secs(5)).unwrap();
        let err = client.predict(&[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::OracleFailure(_)), "{err}");
    }

    #[test]
    fn slow_oracle_times_out() {
        let script = "read h; echo READY; sleep 5";
        let client = connect_oracle(&sh(script), 1, 2, Duration::from_millis(200)).unwrap();
        assert!(matches!(
            client.predict(&[vec![1.0]]),
            Err(Error::OracleFailure(_))
        ));
    }

    #[test]
    fn server_answers_batches_and_single_lines() {
        let model = ConstantModel {
            category: Category(2),
            num_categories: 3,
            input_dim: 2,
        };
        let input = "HELLO m=2 c=3\nBATCH 2\n1,2\n3,4\n5,6\n";
        let mut out = Vec::new();
        serve_oracle(&model, input.as_bytes(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "READY\n2\n2\n2\n");
    }

    #[test]
    fn server_rejects_wrong_hello() {
        let model = ConstantModel {
            category: Category(1),
            num_categories: 2,
            input_dim: 2,
        };
        let mut out = Vec::new();
        assert!(serve_oracle(&model, "HELLO m=3 c=2\n".as_bytes(), &mut out).is_err());
        assert!(String::from_utf8(out).unwrap().starts_with("ERROR"));
    }

    #[test]
    fn row_format_round_trips() {
        let row = [0.1, -2.5e-7, 1e21, 3.0];
        let text = format_row(&row);
        assert_eq!(parse_row(&text, 4).unwrap(), row);
        assert!(!text.contains(' '));
    }
}
