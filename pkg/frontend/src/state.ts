/**
 * Console state store.
 *
 * All model math lives on the server: every displayed number originates
 * from a service response.  Fader drags are debounced to at most one
 * request per window, and responses carry sequence numbers so a stale
 * reply can never overwrite a newer one.
 */
import {
  DecodeResponse,
  FadeBody,
  FaderClient,
  FeatureName,
  ModelInfo,
  Note,
  TransferResponse,
  Transport,
} from "./api.js";
import { debounce } from "./debounce.js";

export interface ConsoleState {
  info: ModelInfo | null;
  segment: Note[] | null;
  keyIndex: number | null;
  faders: Record<FeatureName, number>;
  gauges: Partial<Record<FeatureName, number[]>>;
  output: DecodeResponse | null;
  transfer: TransferResponse | null;
  requestInFlight: boolean;
  error: string | null;
}

export const FADE_DEBOUNCE_MS = 100;

const clamp01 = (value: number) => Math.min(1, Math.max(0, value));

export class ConsoleStore {
  private state: ConsoleState = {
    info: null,
    segment: null,
    keyIndex: null,
    faders: { rhythm: 0.5, note: 0.5 },
    gauges: {},
    output: null,
    transfer: null,
    requestInFlight: false,
    error: null,
  };

  private listeners = new Set<(state: ConsoleState) => void>();
  private client: FaderClient;
  private fadeSequence = 0;
  private appliedFadeSequence = 0;
  private transferSequence = 0;
  private appliedTransferSequence = 0;
  private inFlight = 0;
  private readonly scheduleFade: ((body: FadeBody) => void) & {
    cancel(): void;
    flush(): void;
  };

  constructor(transport: Transport, debounceMs: number = FADE_DEBOUNCE_MS) {
    this.client = new FaderClient(transport);
    this.scheduleFade = debounce((body: FadeBody) => {
      void this.sendFade(body);
    }, debounceMs);
  }

  getState(): ConsoleState {
    return this.state;
  }

  subscribe(listener: (state: ConsoleState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private update(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  private track<T>(promise: Promise<T>): Promise<T> {
    this.inFlight += 1;
    this.update({ requestInFlight: true });
    const settle = () => {
      this.inFlight -= 1;
      if (this.inFlight === 0) this.update({ requestInFlight: false });
    };
    return promise.then(
      (value) => {
        settle();
        return value;
      },
      (err) => {
        settle();
        throw err;
      },
    );
  }

  async loadModelInfo(): Promise<void> {
    try {
      const info = await this.track(this.client.modelInfo());
      this.update({ info, error: null });
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  /** Encode a segment, adopt the server's fader positions, then show its reconstruction. */
  async loadSegment(notes: Note[]): Promise<void> {
    try {
      const encoded = await this.track(this.client.encode({ notes }));
      const gauges: Partial<Record<FeatureName, number[]>> = {};
      const faders = { ...this.state.faders };
      for (const feature of ["rhythm", "note"] as FeatureName[]) {
        const entry = encoded.features[feature];
        if (!entry) continue;
        faders[feature] = clamp01(entry.fader);
        if (entry.cluster_posterior) gauges[feature] = entry.cluster_posterior;
      }
      const output = await this.track(
        this.client.decode({ notes, key_index: encoded.key_index }),
      );
      this.update({
        segment: notes,
        keyIndex: encoded.key_index,
        faders,
        gauges,
        output,
        transfer: null,
        error: null,
      });
    } catch (err) {
      this.update({ error: describe(err) });
    }
  }

  /**
   * Move a fader.  The rendered position updates immediately; the /fade
   * request is debounced so dragging fires at most one request per window.
   */
  onFaderChange(feature: FeatureName, value: number): void {
    if (!this.state.segment) return;
    const faders = { ...this.state.faders, [feature]: clamp01(value) };
    this.update({ faders });
    const body: FadeBody = {
      notes: this.state.segment,
      rhythm_fader: faders.rhythm,
      note_fader: faders.note,
    };
    if (this.state.keyIndex !== null) body.key_index = this.state.keyIndex;
    this.scheduleFade(body);
  }

  private async sendFade(body: FadeBody): Promise<void> {
    const sequence = ++this.fadeSequence;
    try {
      const output = await this.track(this.client.fade(body));
      if (sequence <= this.appliedFadeSequence) return; // stale reply
      this.appliedFadeSequence = sequence;
      this.update({ output, error: null });
    } catch (err) {
      if (sequence > this.appliedFadeSequence) this.update({ error: describe(err) });
    }
  }

  /** Arousal preset: shift toward the target cluster with strength alpha. */
  async applyPreset(targetClass: number, alpha: number): Promise<void> {
    if (!this.state.segment) return;
    if (this.state.info && this.state.info.mode !== "gm_vae") {
      this.update({ error: "presets need a mixture-prior checkpoint" });
      return;
    }
    const sequence = ++this.transferSequence;
    try {
      const body = {
        notes: this.state.segment,
        target_class: targetClass,
        alpha,
        ...(this.state.keyIndex !== null ? { key_index: this.state.keyIndex } : {}),
      };
      const result = await this.track(this.client.transfer(body));
      if (sequence <= this.appliedTransferSequence) return;
      this.appliedTransferSequence = sequence;
      this.update({ transfer: result, gauges: result.clusters_after, error: null });
    } catch (err) {
      if (sequence > this.appliedTransferSequence) this.update({ error: describe(err) });
    }
  }

  flushPendingFade(): void {
    this.scheduleFade.flush();
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
