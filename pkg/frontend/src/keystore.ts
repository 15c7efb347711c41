// Key material issued at registration, kept in local storage per user.
// The private key never goes out in any request after delivery, and
// logout wipes it.

export interface StoredKeys {
  publicKey: string;
  privateKey: string;
}

export interface StringStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const PREFIX = "bonik:keys:";

export class KeyStore {
  private store: StringStore;

  constructor(store?: StringStore) {
    this.store = store ?? localStorage;
  }

  save(userName: string, keys: StoredKeys): void {
    this.store.setItem(PREFIX + userName, JSON.stringify(keys));
  }

  load(userName: string): StoredKeys | null {
    const raw = this.store.getItem(PREFIX + userName);
    if (raw === null) return null;
    try {
      const parsed = JSON.parse(raw);
      if (typeof parsed.publicKey === "string" && typeof parsed.privateKey === "string") {
        return parsed;
      }
    } catch {
      // fall through: treat unreadable entries as absent
    }
    return null;
  }

  clear(userName: string): void {
    this.store.removeItem(PREFIX + userName);
  }
}
