use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::mpsc;
use std::thread::JoinHandle;

/// Dedicated recording writer thread. The session hands it finished lines
/// through a channel so file I/O never stalls a tick.
pub struct Recorder {
    tx: mpsc::Sender<Vec<u8>>,
    thread: JoinHandle<std::io::Result<()>>,
}

impl Recorder {
    pub fn spawn(file: File) -> Self {
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let thread = std::thread::spawn(move || {
            let mut out = BufWriter::new(file);
            while let Ok(chunk) = rx.recv() {
                out.write_all(&chunk)?;
                while let Ok(more) = rx.try_recv() {
                    out.write_all(&more)?;
                }
                out.flush()?;
            }
            out.flush()
        });
        Self { tx, thread }
    }

    pub fn writer(&self) -> ChannelWriter {
        ChannelWriter {
            tx: self.tx.clone(),
            pending: Vec::new(),
        }
    }

    /// Waits until every line handed over so far is on disk. All writers
    /// must have been dropped.
    pub fn finish(self) -> std::io::Result<()> {
        drop(self.tx);
        self.thread
            .join()
            .unwrap_or_else(|_| Err(std::io::Error::other("recorder thread panicked")))
    }
}

/// `Write` end of a [`Recorder`]; forwards whole lines.
pub struct ChannelWriter {
    tx: mpsc::Sender<Vec<u8>>,
    pending: Vec<u8>,
}

impl ChannelWriter {
    fn send_complete_lines(&mut self) -> std::io::Result<()> {
        if let Some(end) = self.pending.iter().rposition(|b| *b == b'\n') {
            let rest = self.pending.split_off(end + 1);
            let lines = std::mem::replace(&mut self.pending, rest);
            self.tx
                .send(lines)
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "recorder stopped"))?;
        }
        Ok(())
    }
}

impl Write for ChannelWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.pending.extend_from_slice(buf);
        self.send_complete_lines()?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if !self.pending.is_empty() {
            let rest = std::mem::take(&mut self.pending);
            self.tx
                .send(rest)
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "recorder stopped"))?;
        }
        Ok(())
    }
}
