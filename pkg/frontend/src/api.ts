// Thin typed client for the edit-service HTTP endpoints.

import type {
  ApiErrorBody,
  MaskInfo,
  Patch,
  PatchResponse,
  RecipeDoc,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly code: number,
    message: string,
    public readonly field?: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<Response> {
  if (res.ok) return res;
  let body: ApiErrorBody | undefined;
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body: fall through to the status line
  }
  throw new ApiError(res.status, body?.message ?? res.statusText, body?.field);
}

export interface CreateSessionOptions {
  paletteK?: number;
  recipe?: RecipeDoc;
  masks?: { name: string; data: Blob }[];
}

export class EditServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(
    image: Blob,
    options: CreateSessionOptions = {},
  ): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", image, "image.png");
    if (options.paletteK !== undefined) {
      form.append("palette_k", String(options.paletteK));
    }
    if (options.recipe !== undefined) {
      form.append("recipe", JSON.stringify(options.recipe));
    }
    for (const mask of options.masks ?? []) {
      form.append("masks", mask.data, mask.name);
    }
    const res = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      body: form,
    });
    return (await raiseForStatus(res)).json();
  }

  async patchRecipe(sessionId: string, patches: Patch[]): Promise<PatchResponse> {
    const res = await this.fetchFn(this.url(`/sessions/${sessionId}/recipe`), {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ patches }),
    });
    return (await raiseForStatus(res)).json();
  }

  async getRecipe(
    sessionId: string,
  ): Promise<{ revision: number; recipe: RecipeDoc }> {
    const res = await this.fetchFn(this.url(`/sessions/${sessionId}/recipe`));
    return (await raiseForStatus(res)).json();
  }

  async getMasks(sessionId: string, full = false): Promise<MaskInfo[]> {
    const suffix = full ? "?full=1" : "";
    const res = await this.fetchFn(
      this.url(`/sessions/${sessionId}/masks${suffix}`),
    );
    const body = await (await raiseForStatus(res)).json();
    return body.masks as MaskInfo[];
  }

  async undo(sessionId: string): Promise<PatchResponse> {
    const res = await this.fetchFn(this.url(`/sessions/${sessionId}/undo`), {
      method: "POST",
    });
    return (await raiseForStatus(res)).json();
  }

  async exportPng(sessionId: string, full = true): Promise<Blob> {
    const suffix = full ? "?full=1" : "";
    const res = await this.fetchFn(
      this.url(`/sessions/${sessionId}/export${suffix}`),
    );
    return (await raiseForStatus(res)).blob();
  }
}
