/**
 * Thin typed client for the trackside HTTP API.
 *
 * Concurrent in-flight GETs are deduplicated per URL: a second caller for
 * the same endpoint shares the pending promise instead of issuing another
 * request.
 */

import type {
  EventInfo,
  EventSummary,
  FeedbackReason,
  FeedbackRecord,
  OnlineMetrics,
  Overlay,
  PhotoPage,
  PhotoRecord,
  TeamSnapshot,
} from "./types.js";
import type { GalleryFilters } from "./state.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`API error ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private inFlight = new Map<string, Promise<unknown>>();

  constructor(
    private readonly baseUrl: string = "",
    private readonly token: string | null = null,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  /** GET with per-URL in-flight deduplication. */
  private get<T>(path: string): Promise<T> {
    const pending = this.inFlight.get(path);
    if (pending) return pending as Promise<T>;
    const promise = this.request<T>(path, { headers: this.headers() }).finally(() => {
      this.inFlight.delete(path);
    });
    this.inFlight.set(path, promise);
    return promise;
  }

  listEvents(): Promise<{ events: EventInfo[] }> {
    return this.get("/events");
  }

  eventSummary(eventId: string): Promise<EventSummary> {
    return this.get(`/events/${encodeURIComponent(eventId)}`);
  }

  metrics(eventId: string): Promise<OnlineMetrics> {
    return this.get(`/events/${encodeURIComponent(eventId)}/metrics`);
  }

  teams(eventId: string): Promise<TeamSnapshot> {
    return this.get(`/teams/${encodeURIComponent(eventId)}`);
  }

  listPhotos(eventId: string, filters: GalleryFilters): Promise<PhotoPage> {
    const params = new URLSearchParams();
    if (filters.number) params.set("number", filters.number);
    if (filters.team) params.set("team", filters.team);
    if (filters.orientation) params.set("orientation", filters.orientation);
    if (filters.manufacturer) params.set("manufacturer", filters.manufacturer);
    if (filters.status) params.set("status", filters.status);
    params.set("page", String(filters.page));
    params.set("page_size", String(filters.pageSize));
    return this.get(`/events/${encodeURIComponent(eventId)}/photos?${params.toString()}`);
  }

  photo(photoId: string): Promise<PhotoRecord> {
    return this.get(`/photos/${encodeURIComponent(photoId)}`);
  }

  overlay(photoId: string): Promise<Overlay> {
    return this.get(`/photos/${encodeURIComponent(photoId)}/overlay`);
  }

  submitFeedback(
    photoId: string,
    reason: FeedbackReason,
    note: string,
  ): Promise<FeedbackRecord> {
    return this.request(`/photos/${encodeURIComponent(photoId)}/feedback`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ reason, note }),
    });
  }
}
