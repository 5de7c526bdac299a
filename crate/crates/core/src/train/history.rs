use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

pub const HISTORY_COLUMNS: &str = "epoch,train_loss,train_acc,val_loss,val_acc,lr";

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Per-epoch metrics plus a `#`-prefixed summary block. Wall-clock time
    /// is kept out so identical runs produce identical files; see
    /// [`History::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_COLUMNS}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr
            );
        }
        let _ = writeln!(s, "# epochs_run={}", self.epochs.len());
        let _ = writeln!(
            s,
            "# best_epoch={}",
            self.best_epoch.map_or("none".into(), |e| e.to_string())
        );
        let _ = writeln!(
            s,
            "# best_val_acc={}",
            self.best_val_acc.map_or("none".into(), |a| a.to_string())
        );
        let _ = writeln!(s, "# stopped_early={}", self.stopped_early);
        for w in &self.warnings {
            let _ = writeln!(s, "# warning={w}");
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = "epoch,seconds\n".to_string();
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:.3}", e.epoch, e.seconds);
        }
        s
    }
}
