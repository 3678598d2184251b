/** Typed client for the fader service HTTP API. */

export type FeatureName = "rhythm" | "note";

export interface ModelInfo {
  checkpoint_id: string;
  mode: "gm_vae" | "vanilla_vae";
  dims: {
    z_dim: number;
    hidden_dim: number;
    embedding_dim: number;
    vocab_size: number;
    max_token_len: number;
  };
  n_clusters: number;
  reg_dim: number;
  zd_ranges: Record<FeatureName, [number, number]>;
  prior_means_summary: Record<FeatureName, { component: number; zd: number; norm: number }[]> | null;
  features: FeatureName[];
}

/** [pitch, onset_step, duration_steps] */
export type Note = [number, number, number];

export interface Densities {
  rhythm: number;
  note: number;
}

export interface EncodeResponse {
  checkpoint_id: string;
  features: Record<
    FeatureName,
    { mu: number[]; z_d: number; fader: number; cluster_posterior?: number[] }
  >;
  key_index: number;
}

export interface DecodeResponse {
  checkpoint_id: string;
  tokens: number[];
  notes: Note[];
  densities: Densities;
  key_index: number;
}

export interface TransferResponse {
  checkpoint_id: string;
  target_class: number;
  alpha: number;
  applied: Record<FeatureName, boolean>;
  tokens_before: number[];
  tokens_after: number[];
  notes_before: Note[];
  notes_after: Note[];
  densities_before: Densities;
  densities_after: Densities;
  density_delta: Densities;
  clusters_before: Record<FeatureName, number[]>;
  clusters_after: Record<FeatureName, number[]>;
}

export interface FadeBody {
  notes?: Note[];
  tokens?: number[];
  rhythm_fader?: number;
  note_fader?: number;
  key_index?: number;
}

export interface TransferBody {
  notes?: Note[];
  tokens?: number[];
  key_index?: number;
  target_class: number;
  alpha: number;
}

/** Transport seam so tests can run without a network. */
export interface Transport {
  get<T>(path: string): Promise<T>;
  post<T>(path: string, body: unknown): Promise<T>;
}

export class HttpError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export function fetchTransport(baseUrl: string): Transport {
  const request = async <T>(path: string, init?: RequestInit): Promise<T> => {
    const response = await fetch(baseUrl.replace(/\/$/, "") + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      const text = await response.text().catch(() => "");
      throw new HttpError(response.status, text || response.statusText);
    }
    return (await response.json()) as T;
  };
  return {
    get: <T>(path: string) => request<T>(path),
    post: <T>(path: string, body: unknown) =>
      request<T>(path, { method: "POST", body: JSON.stringify(body) }),
  };
}

export class FaderClient {
  constructor(private readonly transport: Transport) {}

  modelInfo(): Promise<ModelInfo> {
    return this.transport.get<ModelInfo>("/model/info");
  }

  encode(body: FadeBody): Promise<EncodeResponse> {
    return this.transport.post<EncodeResponse>("/encode", body);
  }

  decode(body: FadeBody): Promise<DecodeResponse> {
    return this.transport.post<DecodeResponse>("/decode", body);
  }

  fade(body: FadeBody): Promise<DecodeResponse> {
    return this.transport.post<DecodeResponse>("/fade", body);
  }

  transfer(body: TransferBody): Promise<TransferResponse> {
    return this.transport.post<TransferResponse>("/transfer", body);
  }
}
